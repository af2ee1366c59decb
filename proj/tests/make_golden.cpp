// Regenerates the golden model file. Run only via the explicit `golden`
// build target so the pinned format cannot drift silently.
#include <fstream>
#include <iostream>

#include "golden_model.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_golden <output-path>\n";
    return 2;
  }
  const auto bytes = afpipe::serialize(golden::tiny_model());
  std::ofstream out(argv[1], std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    std::cerr << "write failed: " << argv[1] << "\n";
    return 1;
  }
  std::cout << "wrote " << bytes.size() << " bytes to " << argv[1] << "\n";
  return 0;
}
