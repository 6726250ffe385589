// Writes the synthetic test stack (mito0035.png .. mito0074.png) to a directory.
#include <iostream>

#include "phantom.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_phantom OUTPUT_DIR\n";
    return 1;
  }
  try {
    phantom::write_stack(phantom::Spec{}, argv[1]);
  } catch (const std::exception& e) {
    std::cerr << "make_phantom: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
