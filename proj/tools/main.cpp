#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "cmi/cli.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Keep large tensor buffers on the heap instead of fresh mmaps; every
  // training step otherwise pays page faults for its gradient buffers.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return cmi::run_cli(argc, argv, std::cout, std::cerr);
}
