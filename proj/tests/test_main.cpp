#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "onsetsurv/runtime.hpp"

int main(int argc, char** argv) {
  onsetsurv::tune_allocator();
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
