#include "sgil/bench_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "sgil/grid.hpp"

namespace sgil::io {

using nlohmann::json;

void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace {

void put_u8(std::string& s, std::uint8_t v) {
  s.push_back(static_cast<char>(v));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>(v >> (8 * i)));
}

void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>(v >> (8 * i)));
}

void put_f64(std::string& s, double v) {
  put_u64(s, std::bit_cast<std::uint64_t>(v));
}

struct Cursor {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw TruncatedFile("truncated payload at byte " + std::to_string(pos));
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos++]))
           << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos++]))
           << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

json model_to_json(const models::Model& m) {
  json j;
  if (const auto* u = std::get_if<models::UnicycleModel>(&m)) {
    j["type"] = "unicycle";
    j["v"] = u->v;
    j["omega_max"] = u->omega_max;
  } else if (const auto* t = std::get_if<models::TaxiModel>(&m)) {
    j["type"] = "taxi";
    j["v"] = t->v;
    j["h"] = t->h;
    j["omega_max"] = t->omega_max;
  } else {
    j["type"] = "int1d";
    j["ubar"] = std::get<models::Int1dModel>(m).ubar;
  }
  return j;
}

models::Model model_from_json(const json& j) {
  const std::string t = j.at("type").get<std::string>();
  if (t == "unicycle") {
    models::UnicycleModel m;
    m.v = j.at("v").get<double>();
    m.omega_max = j.at("omega_max").get<double>();
    return m;
  }
  if (t == "taxi") {
    models::TaxiModel m;
    m.v = j.at("v").get<double>();
    m.h = j.at("h").get<double>();
    m.omega_max = j.at("omega_max").get<double>();
    return m;
  }
  if (t == "int1d") {
    models::Int1dModel m;
    m.ubar = j.at("ubar").get<double>();
    return m;
  }
  throw ParseError("unknown model type: " + t);
}

constexpr std::uint32_t kVfVersion = 1;
constexpr double kSlack = 1e-9;

}  // namespace

void save_vf(const reach::ValueFunction& vf, const std::string& path) {
  const auto& g = *vf.grid;
  std::string out;
  out.reserve(256 + vf.dbar_levels.size() * (g.size() * 8 + 8));

  out += "SGVF";
  put_u32(out, kVfVersion);
  put_u32(out, static_cast<std::uint32_t>(g.dim()));
  for (const auto& ax : g.axes()) {
    put_f64(out, ax.lo);
    put_f64(out, ax.hi);
    put_u64(out, static_cast<std::uint64_t>(ax.n));
    put_u8(out, ax.periodic ? 1 : 0);
  }
  put_u64(out, vf.dbar_levels.size());
  for (double d : vf.dbar_levels) put_f64(out, d);

  json meta;
  meta["model_name"] = vf.model_name;
  meta["env_hash"] = vf.env_hash;
  meta["model"] = model_to_json(vf.model);
  meta["solver"] = {{"cfl", vf.params.cfl},
                    {"convergence_tol", vf.params.convergence_tol},
                    {"max_horizon", vf.params.max_horizon},
                    {"force_generic_kernel", vf.params.force_generic_kernel},
                    {"dbar_levels", vf.params.dbar_levels}};
  json reps = json::array();
  for (const auto& r : vf.reports)
    reps.push_back({{"dbar", r.dbar},
                    {"converged", r.converged},
                    {"horizon", r.horizon},
                    {"steps", r.steps},
                    {"max_rise", r.max_rise},
                    {"dbar_projection", r.dbar_projection}});
  meta["reports"] = std::move(reps);
  const std::string mtext = meta.dump();
  put_u64(out, mtext.size());
  out += mtext;

  for (const auto& slice : vf.slices) {
    const auto n = static_cast<std::size_t>(slice.values.size());
    if constexpr (std::endian::native == std::endian::little) {
      out.append(reinterpret_cast<const char*>(slice.values.data()), n * 8);
    } else {
      for (std::size_t i = 0; i < n; ++i) put_f64(out, slice.values[i]);
    }
  }
  atomic_write(path, out);
}

reach::ValueFunction load_vf(const std::string& path,
                             const models::Environment* env) {
  const std::string buf = read_file(path);
  Cursor c{buf};

  if (c.bytes(4) != "SGVF") throw BadMagic("bad magic in " + path);
  const std::uint32_t version = c.u32();
  if (version != kVfVersion)
    throw UnknownVersion("unknown format version " + std::to_string(version));

  const std::uint32_t dim = c.u32();
  if (dim == 0 || dim > static_cast<std::uint32_t>(grid::kMaxDim))
    throw IoError("implausible axis count " + std::to_string(dim));

  std::vector<grid::Axis> axes(dim);
  for (auto& ax : axes) {
    ax.lo = c.f64();
    ax.hi = c.f64();
    ax.n = static_cast<int>(c.u64());
    ax.periodic = c.u8() != 0;
    if (ax.n < 2 || !(ax.hi > ax.lo)) throw IoError("degenerate axis");
  }

  const std::uint64_t n_levels = c.u64();
  if (n_levels == 0) throw IoError("no disturbance levels");
  std::vector<double> levels(n_levels);
  for (auto& d : levels) d = c.f64();
  for (std::size_t k = 1; k < levels.size(); ++k)
    if (!(levels[k] > levels[k - 1]))
      throw IoError("disturbance levels not ascending");

  const std::uint64_t mlen = c.u64();
  json meta;
  try {
    meta = json::parse(c.bytes(mlen));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad metadata json: ") + e.what());
  }

  reach::ValueFunction vf;
  vf.grid = grid::build_grid(axes);
  vf.dbar_levels = levels;
  vf.model_name = meta.at("model_name").get<std::string>();
  vf.env_hash = meta.at("env_hash").get<std::uint64_t>();
  vf.model = model_from_json(meta.at("model"));
  const auto& sj = meta.at("solver");
  vf.params.cfl = sj.at("cfl").get<double>();
  vf.params.convergence_tol = sj.at("convergence_tol").get<double>();
  vf.params.max_horizon = sj.at("max_horizon").get<double>();
  vf.params.force_generic_kernel = sj.at("force_generic_kernel").get<bool>();
  vf.params.dbar_levels = sj.at("dbar_levels").get<std::vector<double>>();
  for (const auto& rj : meta.at("reports")) {
    reach::SliceReport r;
    r.dbar = rj.at("dbar").get<double>();
    r.converged = rj.at("converged").get<bool>();
    r.horizon = rj.at("horizon").get<double>();
    r.steps = rj.at("steps").get<int>();
    r.max_rise = rj.at("max_rise").get<double>();
    r.dbar_projection = rj.at("dbar_projection").get<double>();
    vf.reports.push_back(r);
  }

  const std::size_t nodes = static_cast<std::size_t>(vf.grid->size());
  const std::size_t expect = nodes * n_levels * 8;
  if (buf.size() - c.pos < expect)
    throw TruncatedFile("truncated payload: have " +
                        std::to_string(buf.size() - c.pos) + " of " +
                        std::to_string(expect) + " bytes");
  if (buf.size() - c.pos > expect)
    throw IoError("trailing bytes after payload");

  for (std::uint64_t k = 0; k < n_levels; ++k) {
    Eigen::ArrayXd values(nodes);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(values.data(), buf.data() + c.pos, nodes * 8);
      c.pos += nodes * 8;
    } else {
      for (std::size_t i = 0; i < nodes; ++i) values[i] = c.f64();
    }
    vf.slices.emplace_back(vf.grid, std::move(values));
  }

  for (std::size_t k = 1; k < vf.slices.size(); ++k)
    if (!(vf.slices[k].values <= vf.slices[k - 1].values + kSlack).all())
      throw IoError("slices not ordered by disturbance level");

  if (env) {
    if (env->hash != vf.env_hash)
      throw HashMismatch("environment hash " + std::to_string(env->hash) +
                         " does not match value function " +
                         std::to_string(vf.env_hash));
    const auto g2 = models::make_grid(*env);
    if (g2->dim() != vf.grid->dim()) throw IoError("grid mismatch");
    for (int a = 0; a < g2->dim(); ++a) {
      const auto& ga = g2->axis(a);
      const auto& fa = vf.grid->axis(a);
      if (ga.lo != fa.lo || ga.hi != fa.hi || ga.n != fa.n ||
          ga.periodic != fa.periodic)
        throw IoError("grid mismatch on axis " + std::to_string(a));
    }
    const grid::Field l = reach::target_field(*env, vf.grid);
    for (const auto& slice : vf.slices)
      if (!(slice.values <= l.values + kSlack).all())
        throw IoError("slice exceeds the target function");
  }
  return vf;
}

void save_dataset(const collect::Dataset& ds, const std::string& path) {
  std::string out;
  json header;
  header["method"] = ds.method;
  header["env_hash"] = ds.env_hash;
  header["seed"] = ds.seed;
  header["demos"] = ds.demos;
  header["failures"] = ds.failures;
  header["timeouts"] = ds.timeouts;
  out += header.dump();
  out += '\n';

  for (const auto& r : ds.records) {
    json j;
    j["demo"] = r.demo_id;
    j["t"] = r.t;
    j["x"] = std::vector<double>(r.x.data(), r.x.data() + r.x.size());
    j["u_expert"] = r.u_expert;
    j["u_applied"] = r.u_applied;
    j["dbar"] = r.dbar;
    if (std::isnan(r.v_safe))
      j["v_safe"] = nullptr;
    else
      j["v_safe"] = r.v_safe;
    j["flag"] = r.flag;
    out += j.dump();
    out += '\n';
  }
  atomic_write(path, out);
}

namespace {

[[noreturn]] void bad_line(int line, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ": " + what);
}

}  // namespace

collect::Dataset load_dataset(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string text;
  int line_no = 0;

  collect::Dataset ds;
  bool have_header = false;
  int prev_demo = -1;
  double prev_t = 0.0;
  Eigen::Index state_dim = -1;

  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      bad_line(line_no, e.what());
    }

    if (!have_header) {
      try {
        ds.method = j.at("method").get<std::string>();
        ds.env_hash = j.at("env_hash").get<std::uint64_t>();
        ds.seed = j.at("seed").get<std::uint64_t>();
        ds.demos = j.at("demos").get<int>();
        ds.failures = j.at("failures").get<int>();
        ds.timeouts = j.at("timeouts").get<int>();
      } catch (const json::exception& e) {
        bad_line(line_no, std::string("header: ") + e.what());
      }
      if (ds.demos < 0 || ds.failures < 0 || ds.timeouts < 0 ||
          ds.failures + ds.timeouts > ds.demos)
        bad_line(line_no, "inconsistent header counts");
      have_header = true;
      continue;
    }

    static const char* kKeys[] = {"demo",      "t",    "x",      "u_expert",
                                  "u_applied", "dbar", "v_safe", "flag"};
    if (j.size() != 8) bad_line(line_no, "record must have exactly 8 keys");
    for (const char* k : kKeys)
      if (!j.contains(k)) bad_line(line_no, std::string("missing key ") + k);

    collect::DemoRecord r;
    try {
      r.demo_id = j["demo"].get<int>();
      r.t = j["t"].get<double>();
      const auto xv = j["x"].get<std::vector<double>>();
      r.x = Eigen::Map<const Eigen::VectorXd>(xv.data(),
                                              static_cast<Eigen::Index>(xv.size()));
      r.u_expert = j["u_expert"].get<double>();
      r.u_applied = j["u_applied"].get<double>();
      r.dbar = j["dbar"].get<double>();
      r.v_safe = j["v_safe"].is_null()
                     ? std::numeric_limits<double>::quiet_NaN()
                     : j["v_safe"].get<double>();
      r.flag = j["flag"].get<bool>();
    } catch (const json::exception& e) {
      bad_line(line_no, e.what());
    }

    if (r.demo_id < 0 || r.demo_id >= ds.demos)
      bad_line(line_no, "demo id out of range");
    if (r.demo_id < prev_demo) bad_line(line_no, "demo ids out of order");
    if (r.demo_id == prev_demo && !(r.t > prev_t))
      bad_line(line_no, "time must increase within a demo");
    if (state_dim < 0) state_dim = r.x.size();
    if (r.x.size() != state_dim) bad_line(line_no, "state dimension changed");
    if (!r.x.allFinite() || !std::isfinite(r.u_expert) ||
        !std::isfinite(r.u_applied) || !std::isfinite(r.dbar) || r.dbar < 0)
      bad_line(line_no, "non-finite record fields");

    prev_demo = r.demo_id;
    prev_t = r.t;
    ds.records.push_back(std::move(r));
  }
  if (!have_header) throw ParseError("line 1: missing dataset header");
  return ds;
}

void save_policy(const policy::MlpPolicy& p, const std::string& path,
                 const std::string& meta_json) {
  json meta;
  try {
    meta = json::parse(meta_json);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad policy metadata: ") + e.what());
  }

  json j;
  j["features"] = p.features;
  j["out_scale"] = p.out_scale;
  j["shift"] = std::vector<double>(p.shift.data(), p.shift.data() + p.shift.size());
  j["scale"] = std::vector<double>(p.scale.data(), p.scale.data() + p.scale.size());
  json layers = json::array();
  for (const auto& l : p.layers) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index k = 0; k < l.W.cols(); ++k) row.push_back(l.W(i, k));
      rows.push_back(std::move(row));
    }
    layers.push_back(
        {{"W", std::move(rows)},
         {"b", std::vector<double>(l.b.data(), l.b.data() + l.b.size())}});
  }
  j["layers"] = std::move(layers);
  j["meta"] = std::move(meta);
  atomic_write(path, j.dump(2) + "\n");
}

policy::MlpPolicy load_policy(const std::string& path, std::string* meta_json) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad policy file: ") + e.what());
  }

  policy::MlpPolicy p;
  try {
    p.features = j.at("features").get<std::string>();
    p.out_scale = j.at("out_scale").get<double>();
    const auto shift = j.at("shift").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    p.shift = Eigen::Map<const Eigen::VectorXd>(
        shift.data(), static_cast<Eigen::Index>(shift.size()));
    p.scale = Eigen::Map<const Eigen::VectorXd>(
        scale.data(), static_cast<Eigen::Index>(scale.size()));
    for (const auto& lj : j.at("layers")) {
      policy::Layer l;
      const auto rows = lj.at("W").get<std::vector<std::vector<double>>>();
      if (rows.empty()) throw ParseError("empty weight matrix");
      l.W.resize(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size())
          throw ParseError("ragged weight matrix");
        for (std::size_t k = 0; k < rows[i].size(); ++k)
          l.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
              rows[i][k];
      }
      const auto b = lj.at("b").get<std::vector<double>>();
      l.b = Eigen::Map<const Eigen::VectorXd>(
          b.data(), static_cast<Eigen::Index>(b.size()));
      p.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad policy file: ") + e.what());
  }

  const int fdim = policy::feature_dim(p.features);
  if (p.shift.size() != fdim || p.scale.size() != fdim)
    throw ParseError("normalization size does not match the feature map");
  if (p.layers.empty()) throw ParseError("policy has no layers");
  Eigen::Index width = fdim;
  for (const auto& l : p.layers) {
    if (l.W.cols() != width || l.b.size() != l.W.rows())
      throw ParseError("layer dimensions do not chain");
    width = l.W.rows();
  }
  if (width != 1) throw ParseError("policy output must be scalar");
  for (const auto& l : p.layers)
    if (!l.W.allFinite() || !l.b.allFinite())
      throw ParseError("non-finite policy weights");

  if (meta_json) *meta_json = j.value("meta", json::object()).dump();
  return p;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\n") != std::string::npos)
        throw IoError("csv cell contains a separator: " + cells[i]);
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  emit(header);
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw IoError("csv row width does not match the header");
    emit(row);
  }
  atomic_write(path, out);
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  CsvTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (line_no == 1) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size())
        throw ParseError("line " + std::to_string(line_no) +
                         ": expected " + std::to_string(t.header.size()) +
                         " columns, got " + std::to_string(cells.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw ParseError("empty csv: " + path);
  return t;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

void plot_svg(const std::string& csv_path, const std::string& svg_path,
              const PlotSpec& spec) {
  const CsvTable t = read_csv(csv_path);
  const int xc = t.column(spec.x_col);
  const int yc = t.column(spec.y_col);
  const int gc = t.column(spec.group_col);
  if (xc < 0 || yc < 0 || gc < 0)
    throw IoError("csv is missing a plot column (" + spec.x_col + ", " +
                  spec.y_col + " or " + spec.group_col + ")");
  if (t.rows.empty()) throw IoError("empty csv: " + csv_path);

  std::map<std::string, std::map<double, std::vector<double>>> series;
  for (const auto& row : t.rows) {
    const double x = std::strtod(row[xc].c_str(), nullptr);
    const double y = std::strtod(row[yc].c_str(), nullptr);
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    series[row[gc]][x].push_back(y);
  }
  if (series.empty()) throw IoError("no plottable rows in " + csv_path);

  struct Pt {
    double x, mean, sd;
  };
  std::map<std::string, std::vector<Pt>> curves;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& [g, byx] : series) {
    auto& c = curves[g];
    for (const auto& [x, ys] : byx) {
      double m = 0.0;
      for (double y : ys) m += y;
      m /= static_cast<double>(ys.size());
      double sd = 0.0;
      if (ys.size() > 1) {
        for (double y : ys) sd += (y - m) * (y - m);
        sd = std::sqrt(sd / static_cast<double>(ys.size() - 1));
      }
      c.push_back({x, m, sd});
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, m - sd);
      ymax = std::max(ymax, m + sd);
    }
  }
  if (xmax <= xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  ymin = std::min(ymin, 0.0);
  if (ymax <= ymin) ymax = ymin + 1.0;
  ymax += 0.05 * (ymax - ymin);

  const double W = 640, H = 440, ml = 70, mr = 170, mt = 40, mb = 55;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(W) +
         "\" height=\"" + fmt2(H) + "\" viewBox=\"0 0 " + fmt2(W) + " " +
         fmt2(H) + "\" font-family=\"monospace\" font-size=\"12\">\n";
  svg += "<rect width=\"" + fmt2(W) + "\" height=\"" + fmt2(H) +
         "\" fill=\"white\"/>\n";
  if (!spec.title.empty())
    svg += "<text x=\"" + fmt2(ml + pw / 2) +
           "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + spec.title +
           "</text>\n";

  for (int i = 0; i <= 4; ++i) {
    const double gx = xmin + (xmax - xmin) * i / 4.0;
    const double gy = ymin + (ymax - ymin) * i / 4.0;
    svg += "<line x1=\"" + fmt2(sx(gx)) + "\" y1=\"" + fmt2(mt) + "\" x2=\"" +
           fmt2(sx(gx)) + "\" y2=\"" + fmt2(H - mb) +
           "\" stroke=\"#dddddd\"/>\n";
    svg += "<line x1=\"" + fmt2(ml) + "\" y1=\"" + fmt2(sy(gy)) + "\" x2=\"" +
           fmt2(W - mr) + "\" y2=\"" + fmt2(sy(gy)) +
           "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + fmt2(sx(gx)) + "\" y=\"" + fmt2(H - mb + 18) +
           "\" text-anchor=\"middle\">" + fmt_tick(gx) + "</text>\n";
    svg += "<text x=\"" + fmt2(ml - 8) + "\" y=\"" + fmt2(sy(gy) + 4) +
           "\" text-anchor=\"end\">" + fmt_tick(gy) + "</text>\n";
  }
  svg += "<rect x=\"" + fmt2(ml) + "\" y=\"" + fmt2(mt) + "\" width=\"" +
         fmt2(pw) + "\" height=\"" + fmt2(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + fmt2(ml + pw / 2) + "\" y=\"" + fmt2(H - 12) +
         "\" text-anchor=\"middle\">" + spec.x_col + "</text>\n";
  svg += "<text x=\"18\" y=\"" + fmt2(mt + ph / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         fmt2(mt + ph / 2) + ")\">" + spec.y_col + "</text>\n";

  int idx = 0;
  for (const auto& [g, pts] : curves) {
    const char* color = kPalette[idx % 8];
    if (pts.size() > 1) {
      std::string band = "M";
      for (const auto& p : pts)
        band += " " + fmt2(sx(p.x)) + "," + fmt2(sy(p.mean + p.sd));
      for (auto it = pts.rbegin(); it != pts.rend(); ++it)
        band += " L " + fmt2(sx(it->x)) + "," + fmt2(sy(it->mean - it->sd));
      band += " Z";
      svg += "<path d=\"" + band + "\" fill=\"" + std::string(color) +
             "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
      std::string poly;
      for (const auto& p : pts)
        poly += fmt2(sx(p.x)) + "," + fmt2(sy(p.mean)) + " ";
      poly.pop_back();
      svg += "<polyline points=\"" + poly + "\" fill=\"none\" stroke=\"" +
             std::string(color) + "\" stroke-width=\"2\"/>\n";
    }
    for (const auto& p : pts)
      svg += "<circle cx=\"" + fmt2(sx(p.x)) + "\" cy=\"" + fmt2(sy(p.mean)) +
             "\" r=\"3\" fill=\"" + std::string(color) + "\"/>\n";
    const double ly = mt + 16 + 18 * idx;
    svg += "<rect x=\"" + fmt2(W - mr + 14) + "\" y=\"" + fmt2(ly - 9) +
           "\" width=\"12\" height=\"12\" fill=\"" + std::string(color) +
           "\"/>\n";
    svg += "<text x=\"" + fmt2(W - mr + 32) + "\" y=\"" + fmt2(ly + 1) +
           "\">" + g + "</text>\n";
    ++idx;
  }
  svg += "</svg>\n";
  atomic_write(svg_path, svg);
}

}  // namespace sgil::io
