#ifndef LINKEDMF_CLI_MANIFEST_HPP
#define LINKEDMF_CLI_MANIFEST_HPP

#include "linkedmf/decompose.hpp"
#include "linkedmf/linked.hpp"
#include "linkedmf/shrinkage.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace linkedmf::cli {

struct BlockFiles {
  std::filesystem::path data;
  std::optional<std::filesystem::path> mask;  // 0/1 matrix, 1 = missing
};

/// A validated grid description with its data loaded.
///
/// JSON layout:
///   {
///     "row_sets": [M_1, ...], "col_sets": [N_1, ...],
///     "blocks": [["x11.tsv", {"data": "x12.tsv", "mask": "m12.tsv"}], ...],
///     "modules": "enumerate" | {"R": [[...], ...], "C": [[...], ...]},
///     "options": {"tol": 1e-8, "max_iter": 500, "sigma": "estimate" | [[...]],
///                 "seed": 0, "center": false, "kappa_form": "printed",
///                 "init": "bidifac", "sigma_inflation": "printed"}
///   }
/// Relative paths resolve against the manifest's directory.
struct Manifest {
  std::filesystem::path path;
  Layout layout;
  std::vector<std::vector<BlockFiles>> files;
  ModuleGrid modules;
  BlockGrid grid;

  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<Matrix> sigma;
  std::optional<std::uint64_t> seed;
  bool center = false;
  std::optional<KappaForm> kappa_form;
  std::optional<Initialization> init;
  std::optional<SigmaInflation> sigma_inflation;
};

Manifest parse_manifest(const std::filesystem::path& path);

}  // namespace linkedmf::cli

#endif  // LINKEDMF_CLI_MANIFEST_HPP
