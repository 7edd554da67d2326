#include "linkedmf/cli/manifest.hpp"

#include "linkedmf/cli/io.hpp"

#include <json.hpp>

#include <fstream>

namespace linkedmf::cli {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorKind::Data, path.string() + ": " + what);
}

std::vector<Index> sizes(const json& j, const char* key, const std::filesystem::path& path) {
  if (!j.contains(key) || !j[key].is_array() || j[key].empty()) bad(path, std::string("'") + key + "' must be a non-empty array");
  std::vector<Index> out;
  for (const json& v : j[key]) {
    if (!v.is_number_integer() || v.get<long long>() < 1) bad(path, std::string("'") + key + "' entries must be positive integers");
    out.push_back(v.get<Index>());
  }
  return out;
}

Eigen::MatrixXi indicator(const json& j, const char* key, Index sets, const std::filesystem::path& path) {
  if (!j.contains(key) || !j[key].is_array() || static_cast<Index>(j[key].size()) != sets) {
    bad(path, std::string("modules.") + key + " must have one row per set (" + std::to_string(sets) + ")");
  }
  const json& rows = j[key];
  if (!rows[0].is_array() || rows[0].empty()) bad(path, std::string("modules.") + key + " rows must be arrays");
  const auto k = static_cast<Index>(rows[0].size());
  Eigen::MatrixXi out(sets, k);
  for (Index i = 0; i < sets; ++i) {
    const json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != k) {
      bad(path, std::string("modules.") + key + " row " + std::to_string(i + 1) + " has the wrong length");
    }
    for (Index c = 0; c < k; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
        bad(path, std::string("modules.") + key + " entries must be 0 or 1");
      }
      out(i, c) = v.get<int>();
    }
  }
  return out;
}

std::string block_name(Index i, Index j) { return "block (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")"; }

}  // namespace

Manifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Data, "cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    bad(path, e.what());
  }
  if (!j.is_object()) bad(path, "top level must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "row_sets" && key != "col_sets" && key != "blocks" && key != "modules" && key != "options") {
      bad(path, "unknown key '" + key + "'");
    }
  }

  Manifest m;
  m.path = path;
  const auto row_sizes = sizes(j, "row_sets", path);
  const auto col_sizes = sizes(j, "col_sets", path);
  m.layout = Layout(row_sizes, col_sizes);
  const Index ni = m.layout.row_sets();
  const Index nj = m.layout.col_sets();
  const std::filesystem::path base = path.parent_path();

  if (!j.contains("blocks") || !j["blocks"].is_array() || static_cast<Index>(j["blocks"].size()) != ni) {
    bad(path, "'blocks' must have one row per row set (" + std::to_string(ni) + ")");
  }
  Matrix data(m.layout.rows(), m.layout.cols());
  Mask mask(m.layout.rows(), m.layout.cols());
  for (Index i = 0; i < ni; ++i) {
    const json& row = j["blocks"][static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != nj) {
      bad(path, "'blocks' row " + std::to_string(i + 1) + " must list " + std::to_string(nj) + " blocks");
    }
    std::vector<BlockFiles> files;
    for (Index jj = 0; jj < nj; ++jj) {
      const json& b = row[static_cast<std::size_t>(jj)];
      BlockFiles f;
      if (b.is_string()) {
        f.data = base / b.get<std::string>();
      } else if (b.is_object() && b.contains("data") && b["data"].is_string()) {
        f.data = base / b["data"].get<std::string>();
        if (b.contains("mask")) {
          if (!b["mask"].is_string()) bad(path, block_name(i, jj) + ": mask must be a path");
          f.mask = base / b["mask"].get<std::string>();
        }
      } else {
        bad(path, block_name(i, jj) + ": expected a path or {\"data\": ..., \"mask\": ...}");
      }

      LoadedMatrix x = load_matrix(f.data);
      const Index rows = m.layout.row_size(i);
      const Index cols = m.layout.col_size(jj);
      if (x.values.rows() != rows || x.values.cols() != cols) {
        throw Error(ErrorKind::ShapeMismatch,
                    path.string() + ": " + block_name(i, jj) + " (" + f.data.string() + ") is " +
                        std::to_string(x.values.rows()) + "x" + std::to_string(x.values.cols()) + ", declared " +
                        std::to_string(rows) + "x" + std::to_string(cols));
      }
      if (f.mask) {
        const LoadedMatrix mk = load_matrix(*f.mask);
        if (mk.values.rows() != rows || mk.values.cols() != cols || mk.mask.any()) {
          throw Error(ErrorKind::ShapeMismatch, path.string() + ": mask of " + block_name(i, jj) + " must be a complete " +
                                                    std::to_string(rows) + "x" + std::to_string(cols) + " 0/1 matrix");
        }
        if (!((mk.values.array() == 0.0) || (mk.values.array() == 1.0)).all()) {
          bad(path, "mask of " + block_name(i, jj) + " must contain only 0 and 1");
        }
        x.mask = x.mask || (mk.values.array() == 1.0);
      }
      if (x.mask.all()) bad(path, block_name(i, jj) + " is entirely missing");
      data.block(m.layout.row_offset(i), m.layout.col_offset(jj), rows, cols) = x.values;
      mask.block(m.layout.row_offset(i), m.layout.col_offset(jj), rows, cols) = x.mask;
      files.push_back(std::move(f));
    }
    m.files.push_back(std::move(files));
  }
  m.grid = mask.any() ? BlockGrid(m.layout, data, mask) : BlockGrid(m.layout, data);

  const json modules = j.value("modules", json("enumerate"));
  try {
    if (modules.is_string() && modules.get<std::string>() == "enumerate") {
      m.modules = enumerate_modules(ni, nj);
    } else if (modules.is_object()) {
      m.modules = ModuleGrid::from_indicators(indicator(modules, "R", ni, path), indicator(modules, "C", nj, path));
    } else {
      bad(path, "'modules' must be \"enumerate\" or {\"R\": ..., \"C\": ...}");
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Data) throw;
    throw Error(ErrorKind::Data, path.string() + ": invalid module spec: " + e.what());
  }

  if (j.contains("options")) {
    const json& o = j["options"];
    if (!o.is_object()) bad(path, "'options' must be an object");
    for (const auto& [key, v] : o.items()) {
      if (key == "tol") {
        if (!v.is_number() || !(v.get<double>() > 0.0)) bad(path, "options.tol must be > 0");
        m.tol = v.get<double>();
      } else if (key == "max_iter") {
        if (!v.is_number_integer() || v.get<int>() < 1) bad(path, "options.max_iter must be a positive integer");
        m.max_iter = v.get<int>();
      } else if (key == "sigma") {
        if (v.is_string() && v.get<std::string>() == "estimate") continue;
        if (!v.is_array() || static_cast<Index>(v.size()) != ni) bad(path, "options.sigma must be \"estimate\" or an I x J array");
        Matrix s(ni, nj);
        for (Index i = 0; i < ni; ++i) {
          const json& row = v[static_cast<std::size_t>(i)];
          if (!row.is_array() || static_cast<Index>(row.size()) != nj) bad(path, "options.sigma must be I x J");
          for (Index jj = 0; jj < nj; ++jj) {
            const json& x = row[static_cast<std::size_t>(jj)];
            if (!x.is_number() || !(x.get<double>() > 0.0)) bad(path, "options.sigma entries must be > 0");
            s(i, jj) = x.get<double>();
          }
        }
        m.sigma = s;
      } else if (key == "seed") {
        if (!v.is_number_unsigned()) bad(path, "options.seed must be a non-negative integer");
        m.seed = v.get<std::uint64_t>();
      } else if (key == "center") {
        if (!v.is_boolean()) bad(path, "options.center must be true or false");
        m.center = v.get<bool>();
      } else if (key == "kappa_form") {
        if (!v.is_string()) bad(path, "options.kappa_form must be a string");
        try {
          m.kappa_form = kappa_form_from_string(v.get<std::string>());
        } catch (const Error& e) {
          bad(path, e.what());
        }
      } else if (key == "init") {
        if (!v.is_string()) bad(path, "options.init must be a string");
        try {
          m.init = initialization_from_string(v.get<std::string>());
        } catch (const Error& e) {
          bad(path, e.what());
        }
      } else if (key == "sigma_inflation") {
        if (!v.is_string()) bad(path, "options.sigma_inflation must be a string");
        try {
          m.sigma_inflation = sigma_inflation_from_string(v.get<std::string>());
        } catch (const Error& e) {
          bad(path, e.what());
        }
      } else {
        bad(path, "unknown option '" + key + "'");
      }
    }
  }
  return m;
}

}  // namespace linkedmf::cli
