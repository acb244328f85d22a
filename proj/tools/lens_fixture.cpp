// Writes a synthetic LensDB with planted concepts, for demos and smoke tests.
#include <iostream>

#include <CLI11.hpp>

#include "lens/fixtures.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic LensDB", "lens-fixture"};
  std::string out;
  std::string kind = "synthetic";
  std::uint64_t seed = 1;
  std::size_t components = 24;
  std::size_t dim = 32;
  bool thumbnails = false;
  app.add_option("out", out, "Output directory")->required();
  app.add_option("--kind", kind, "synthetic or orthogonal")
      ->check(CLI::IsMember({"synthetic", "orthogonal"}))
      ->capture_default_str();
  app.add_option("--seed", seed, "Generator seed")->capture_default_str();
  app.add_option("--components", components, "Components in the audited layer")->capture_default_str();
  app.add_option("--dim", dim, "Embedding dimension")->capture_default_str();
  app.add_flag("--thumbnails", thumbnails, "Include placeholder example thumbnails");
  CLI11_PARSE(app, argc, argv);

  try {
    if (kind == "orthogonal") {
      lens::fixtures::orthogonal_pairs_db(components, dim).export_to(out);
    } else {
      lens::fixtures::SyntheticDbSpec spec;
      spec.seed = seed;
      spec.dim = dim;
      spec.layers = {{"early", components / 2 + 1}, {"late", components}};
      spec.targets = {"ox", "cart"};
      spec.with_thumbnails = thumbnails;
      lens::fixtures::generate(spec).db.export_to(out);
    }
  } catch (const lens::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}
