// Writes chip.gds and annotations.json for each bundled sample.
//
//   make_samples <samples-dir>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>

#include "sample_chips.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    fmt::print(stderr, "usage: make_samples <samples-dir>\n");
    return 2;
  }
  namespace fs = std::filesystem;
  for (const auto& chip : cqedtk::samples::all()) {
    const fs::path dir = fs::path(argv[1]) / chip.name;
    fs::create_directories(dir);
    const auto bytes = cqedtk::gds::write_gds(chip.library);
    std::ofstream(dir / "chip.gds", std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    std::ofstream(dir / "annotations.json") << chip.annotations.dump(2) << '\n';
    fmt::print("{}: {} bytes of GDSII\n", dir.string(), bytes.size());
  }
  return 0;
}
