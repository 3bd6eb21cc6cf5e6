#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgil/collect.hpp"
#include "sgil/models.hpp"
#include "sgil/policy.hpp"
#include "sgil/reach.hpp"

namespace sgil::io {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagic : IoError {
  using IoError::IoError;
};
struct UnknownVersion : IoError {
  using IoError::IoError;
};
struct TruncatedFile : IoError {
  using IoError::IoError;
};
struct HashMismatch : IoError {
  using IoError::IoError;
};
struct ParseError : IoError {
  using IoError::IoError;
};

// Writes to path + ".tmp" then renames; readers never observe partial files.
void atomic_write(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

// Shortest text that parses back to the same double; NaN becomes "nan".
std::string format_double(double v);

// Little-endian container: "SGVF", version, axes (lo, hi, n, periodic),
// dbar levels, a JSON metadata blob, then the slice payload row-major with
// the last state axis fastest and slices concatenated outermost.
void save_vf(const reach::ValueFunction& vf, const std::string& path);

// Validates the header, payload length, level ordering and slice
// monotonicity; with an environment also the config hash and V <= l.
reach::ValueFunction load_vf(const std::string& path,
                             const models::Environment* env = nullptr);

// JSONL: one header object (method, env_hash, seed, demos, failures,
// timeouts), then one object per record; NaN v_safe is null.
void save_dataset(const collect::Dataset& ds, const std::string& path);
collect::Dataset load_dataset(const std::string& path);

void save_policy(const policy::MlpPolicy& p, const std::string& path,
                 const std::string& meta_json = "{}");
policy::MlpPolicy load_policy(const std::string& path,
                              std::string* meta_json = nullptr);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};
CsvTable read_csv(const std::string& path);

struct PlotSpec {
  std::string x_col = "K";
  std::string y_col = "failure_rate";
  std::string group_col = "method";
  std::string title;
};

// One polyline per group with a +-std band across rows sharing an x value;
// output bytes depend only on the table contents.
void plot_svg(const std::string& csv_path, const std::string& svg_path,
              const PlotSpec& spec);

int cli_main(int argc, const char* const* argv);

}  // namespace sgil::io
