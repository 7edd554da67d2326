#ifndef LINKEDMF_CLI_COMMANDS_HPP
#define LINKEDMF_CLI_COMMANDS_HPP

#include "linkedmf/simbench.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>

namespace linkedmf::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Exit code for an error category.
int exit_code(ErrorKind kind) noexcept;

ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json experiment_spec_to_json(const ExperimentSpec& spec);
nlohmann::ordered_json summary_to_json(const ResultTable& table);

/// Per-row means of the observed entries within each block, `M x J`; rows
/// with no observed entry in a block get 0.
Matrix block_row_means(const BlockGrid& grid);
/// Adds `sign * means` to every block of `x`.
void shift_by_row_means(Matrix& x, const Layout& layout, const Matrix& means, double sign);

/// Writes into a temporary sibling directory and renames it over `target`
/// on commit. Refuses a non-empty `target` that was not produced by this
/// tool.
class StagedDir {
 public:
  explicit StagedDir(std::filesystem::path target);
  ~StagedDir();
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;

  const std::filesystem::path& path() const { return tmp_; }
  void commit();

 private:
  std::filesystem::path target_;
  std::filesystem::path tmp_;
  bool committed_ = false;
};

/// Entry point of the `linkedmf` executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace linkedmf::cli

#endif  // LINKEDMF_CLI_COMMANDS_HPP
