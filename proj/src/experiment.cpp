#include "adjgp/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "adjgp/error.hpp"
#include "adjgp/parallel.hpp"
#include "adjgp/rng.hpp"

namespace adjgp {

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::Ode: return "ode";
    case SystemKind::Pde: return "pde";
    case SystemKind::Shift: return "shift";
  }
  return "?";
}

namespace {

// ---------------------------------------------------------------------------
// Scalar parsing and printing.

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

// ---------------------------------------------------------------------------
// Schema.

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"system", {"kind"}},
      {"ode", {"p0", "p1", "p2", "t_end"}},
      {"pde", {"velocity_x", "velocity_y", "diffusivity", "x_lo", "x_hi", "y_lo",
               "y_hi", "t_end"}},
      {"shift", {"shift", "lo", "hi"}},
      {"grid", {"cells", "nt", "ny", "nx"}},
      {"truth", {"source", "lengthscale", "variance", "features"}},
      {"kernel", {"lengthscale", "variance", "features", "lengthscales"}},
      {"sensors", {"rule", "count", "points", "lo", "hi", "width", "time_windows",
                   "time_width", "heldout"}},
      {"noise", {"sigma"}},
      {"seeds", {"data", "basis", "noise", "sample"}},
      {"inference", {"predictive_samples", "ridge"}},
      {"mcmc", {"steps", "burn_in", "proposal_scale", "batch_size", "seed", "tune"}},
      {"sweep", {"sensors", "features", "replicates"}},
      {"scan", {}},  // "samples" plus one key per axis
      {"output", {"dir"}},
  };
  return s;
}

ScanAxis parse_axis(const std::string& name, const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3 && parts.size() != 4)
    throw ConfigError("scan." + name + ": expected lo:hi:steps[:log], got '" + text + "'");
  ScanAxis a;
  a.name = name;
  a.lo = parse_double("scan." + name, parts[0]);
  a.hi = parse_double("scan." + name, parts[1]);
  a.steps = parse_u64("scan." + name, parts[2]);
  if (parts.size() == 4) {
    if (parts[3] == "log") a.log_spaced = true;
    else if (parts[3] != "linear")
      throw ConfigError("scan." + name + ": spacing must be 'log' or 'linear'");
  }
  return a;
}

std::vector<std::size_t> parse_counts(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_u64(key, item));
  if (out.empty()) throw ConfigError(key + ": list is empty");
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  switch (kind) {
    case SystemKind::Ode:
      ode.validate();
      require(cells >= 2, "grid.cells must be at least 2");
      break;
    case SystemKind::Pde:
      pde.validate();
      require(nt >= 2 && ny >= 2 && nx >= 2, "grid.nt, grid.ny, grid.nx must be at least 2");
      {
        const Grid g = make_grid(*this);
        const double limit = cfl_limit(pde, g);
        if (g.spacing()[0] > limit) {
          std::ostringstream msg;
          msg << "grid.nt: time step " << g.spacing()[0]
              << " violates the CFL limit; maximal admissible dt is " << limit;
          throw ConfigError(msg.str());
        }
      }
      break;
    case SystemKind::Shift:
      require(shift_hi > shift_lo, "shift.hi must exceed shift.lo");
      require(cells >= 2, "grid.cells must be at least 2");
      (void)shift.cells(make_grid(*this));
      break;
  }
  kernel.validate();
  truth.kernel.validate();
  require(truth.source == "rff" || truth.source == "shared",
          "truth.source must be 'rff' or 'shared'");
  require(truth.features >= 1, "truth.features must be at least 1");
  require(features >= 1, "kernel.features must be at least 1");
  require(ridge >= 0.0 && std::isfinite(ridge), "inference.ridge must be non-negative");
  require(sigma >= 0.0 && std::isfinite(sigma), "noise.sigma must be non-negative");
  require(predictive_samples >= 1, "inference.predictive_samples must be at least 1");

  const bool one_d = kind != SystemKind::Pde;
  if (one_d) {
    require(sensors.rule == "tile", "sensors.rule must be 'tile' for 1-D systems");
    const Grid g = make_grid(*this);
    const double lo = sensors.lo.value_or(g.lower(0));
    const double hi = sensors.hi.value_or(g.upper(0));
    require(hi > lo, "sensors.hi must exceed sensors.lo");
    require(lo >= g.lower(0) - 1e-12 && hi <= g.upper(0) + 1e-12,
            "sensors.lo/hi must lie inside the domain");
  } else {
    require(sensors.rule == "grid" || sensors.rule == "list",
            "sensors.rule must be 'grid' or 'list' for the PDE");
    if (sensors.rule == "grid") {
      const auto k = static_cast<std::size_t>(std::llround(std::sqrt(double(sensors.count))));
      require(k * k == sensors.count,
              "sensors.count must be a perfect square for the grid rule");
    } else {
      require(!sensors.points.empty(), "sensors.points is empty");
    }
    require(sensors.width > 0.0, "sensors.width must be positive");
    require(sensors.time_windows >= 1, "sensors.time_windows must be at least 1");
    require(sensors.time_width > 0.0 && sensors.time_width <= pde.t_end,
            "sensors.time_width must be in (0, T]");
  }
  require(sensors.count >= 1, "sensors.count must be at least 1");

  require(mcmc.steps > mcmc.burn_in, "mcmc.burn_in must be smaller than mcmc.steps");
  require(mcmc.proposal_scale > 0.0, "mcmc.proposal_scale must be positive");
  require(!sweep.sensors.empty() && !sweep.features.empty(), "sweep lists are empty");
  require(sweep.replicates >= 1, "sweep.replicates must be at least 1");
  for (auto s : sweep.sensors) require(s >= 1, "sweep.sensors entries must be positive");
  for (auto m : sweep.features) require(m >= 1, "sweep.features entries must be positive");

  const auto keys = theta_keys(*this);
  for (const auto& a : scan.axes) {
    require(std::find(keys.begin(), keys.end(), a.name) != keys.end(),
            "scan." + a.name + " is not a tunable parameter of this system");
    require(a.steps >= 1, "scan." + a.name + " needs at least one step");
    require(a.hi >= a.lo, "scan." + a.name + ": hi must not be below lo");
    require(!a.log_spaced || a.lo > 0.0, "scan." + a.name + ": log spacing needs lo > 0");
  }
  require(scan.samples >= 2, "scan.samples must be at least 2");
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  // Drop trailing comments: '#' or ';' at line start or after whitespace.
  std::string stripped;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    for (std::size_t i = 0; i < line.size(); ++i)
      if ((line[i] == '#' || line[i] == ';') && (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1])))) {
        line.resize(i);
        break;
      }
    stripped += line + '\n';
  }
  std::istringstream in(stripped);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    const auto known = schema().find(section);
    if (known == schema().end()) {
      if (body.empty()) throw ConfigError("config: key '" + section + "' outside any section");
      throw ConfigError("config: unknown section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      const std::string v = node.get_value<std::string>();
      const std::string path = section + "." + key;
      if (section == "scan") {
        if (key == "samples") c.scan.samples = parse_u64(path, v);
        else c.scan.axes.push_back(parse_axis(key, v));
        continue;
      }
      if (!known->second.contains(key))
        throw ConfigError("config: unknown key '" + path + "'");
      auto num = [&] { return parse_double(path, v); };
      auto count = [&] { return static_cast<std::size_t>(parse_u64(path, v)); };

      if (section == "system") {
        const std::string kind = trim(v);
        if (kind == "ode") c.kind = SystemKind::Ode;
        else if (kind == "pde") c.kind = SystemKind::Pde;
        else if (kind == "shift") c.kind = SystemKind::Shift;
        else throw ConfigError("system.kind must be ode, pde or shift");
      } else if (section == "ode") {
        if (key == "p0") c.ode.p0 = num();
        else if (key == "p1") c.ode.p1 = num();
        else if (key == "p2") c.ode.p2 = num();
        else c.ode.t_end = num();
      } else if (section == "pde") {
        if (key == "velocity_x") c.pde.velocity[0] = num();
        else if (key == "velocity_y") c.pde.velocity[1] = num();
        else if (key == "diffusivity") c.pde.diffusivity = num();
        else if (key == "x_lo") c.pde.x_lo = num();
        else if (key == "x_hi") c.pde.x_hi = num();
        else if (key == "y_lo") c.pde.y_lo = num();
        else if (key == "y_hi") c.pde.y_hi = num();
        else c.pde.t_end = num();
      } else if (section == "shift") {
        if (key == "shift") c.shift.shift = num();
        else if (key == "lo") c.shift_lo = num();
        else c.shift_hi = num();
      } else if (section == "grid") {
        if (key == "cells") c.cells = count();
        else if (key == "nt") c.nt = count();
        else if (key == "ny") c.ny = count();
        else c.nx = count();
      } else if (section == "truth") {
        if (key == "source") c.truth.source = trim(v);
        else if (key == "lengthscale") c.truth.kernel.lengthscale = num();
        else if (key == "variance") c.truth.kernel.variance = num();
        else c.truth.features = count();
      } else if (section == "kernel") {
        if (key == "lengthscale") c.kernel.lengthscale = num();
        else if (key == "variance") c.kernel.variance = num();
        else if (key == "features") c.features = count();
        else
          throw ConfigError(
              "kernel.lengthscales: per-axis lengthscales are reserved; only "
              "isotropic kernels are supported");
      } else if (section == "sensors") {
        if (key == "rule") c.sensors.rule = trim(v);
        else if (key == "count") c.sensors.count = count();
        else if (key == "lo") c.sensors.lo = num();
        else if (key == "hi") c.sensors.hi = num();
        else if (key == "width") c.sensors.width = num();
        else if (key == "time_windows") c.sensors.time_windows = count();
        else if (key == "time_width") c.sensors.time_width = num();
        else if (key == "heldout") c.sensors.heldout = count();
        else {
          for (const auto& item : split(v, ',')) {
            const auto xy = split(item, ':');
            if (xy.size() != 2)
              throw ConfigError(path + ": expected x:y pairs separated by commas");
            c.sensors.points.push_back({parse_double(path, xy[0]), parse_double(path, xy[1])});
          }
        }
      } else if (section == "noise") {
        c.sigma = num();
      } else if (section == "seeds") {
        if (key == "data") c.seeds.data = parse_u64(path, v);
        else if (key == "basis") c.seeds.basis = parse_u64(path, v);
        else if (key == "noise") c.seeds.noise = parse_u64(path, v);
        else c.seeds.sample = parse_u64(path, v);
      } else if (section == "inference") {
        if (key == "predictive_samples") c.predictive_samples = count();
        else c.ridge = num();
      } else if (section == "mcmc") {
        if (key == "steps") c.mcmc.steps = count();
        else if (key == "burn_in") c.mcmc.burn_in = count();
        else if (key == "proposal_scale") c.mcmc.proposal_scale = num();
        else if (key == "batch_size") c.mcmc.batch_size = count();
        else if (key == "seed") c.mcmc.seed = parse_u64(path, v);
        else c.mcmc.tune = parse_bool(path, v);
      } else if (section == "sweep") {
        if (key == "sensors") c.sweep.sensors = parse_counts(path, v);
        else if (key == "features") c.sweep.features = parse_counts(path, v);
        else c.sweep.replicates = count();
      } else if (section == "output") {
        c.output = trim(v);
      }
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[system]\nkind = " << to_string(c.kind) << "\n\n";
  o << "[ode]\np0 = " << fmt(c.ode.p0) << "\np1 = " << fmt(c.ode.p1)
    << "\np2 = " << fmt(c.ode.p2) << "\nt_end = " << fmt(c.ode.t_end) << "\n\n";
  o << "[pde]\nvelocity_x = " << fmt(c.pde.velocity[0])
    << "\nvelocity_y = " << fmt(c.pde.velocity[1])
    << "\ndiffusivity = " << fmt(c.pde.diffusivity) << "\nx_lo = " << fmt(c.pde.x_lo)
    << "\nx_hi = " << fmt(c.pde.x_hi) << "\ny_lo = " << fmt(c.pde.y_lo)
    << "\ny_hi = " << fmt(c.pde.y_hi) << "\nt_end = " << fmt(c.pde.t_end) << "\n\n";
  o << "[shift]\nshift = " << fmt(c.shift.shift) << "\nlo = " << fmt(c.shift_lo)
    << "\nhi = " << fmt(c.shift_hi) << "\n\n";
  o << "[grid]\ncells = " << c.cells << "\nnt = " << c.nt << "\nny = " << c.ny
    << "\nnx = " << c.nx << "\n\n";
  o << "[truth]\nsource = " << c.truth.source
    << "\nlengthscale = " << fmt(c.truth.kernel.lengthscale)
    << "\nvariance = " << fmt(c.truth.kernel.variance)
    << "\nfeatures = " << c.truth.features << "\n\n";
  o << "[kernel]\nlengthscale = " << fmt(c.kernel.lengthscale)
    << "\nvariance = " << fmt(c.kernel.variance) << "\nfeatures = " << c.features
    << "\n\n";
  o << "[sensors]\nrule = " << c.sensors.rule << "\ncount = " << c.sensors.count << '\n';
  if (!c.sensors.points.empty()) {
    o << "points = ";
    for (std::size_t i = 0; i < c.sensors.points.size(); ++i)
      o << (i ? ", " : "") << fmt(c.sensors.points[i][0]) << ':'
        << fmt(c.sensors.points[i][1]);
    o << '\n';
  }
  if (c.sensors.lo) o << "lo = " << fmt(*c.sensors.lo) << '\n';
  if (c.sensors.hi) o << "hi = " << fmt(*c.sensors.hi) << '\n';
  o << "width = " << fmt(c.sensors.width) << "\ntime_windows = " << c.sensors.time_windows
    << "\ntime_width = " << fmt(c.sensors.time_width)
    << "\nheldout = " << c.sensors.heldout << "\n\n";
  o << "[noise]\nsigma = " << fmt(c.sigma) << "\n\n";
  o << "[seeds]\ndata = " << c.seeds.data << "\nbasis = " << c.seeds.basis
    << "\nnoise = " << c.seeds.noise << "\nsample = " << c.seeds.sample << "\n\n";
  o << "[inference]\npredictive_samples = " << c.predictive_samples
    << "\nridge = " << fmt(c.ridge) << "\n\n";
  o << "[mcmc]\nsteps = " << c.mcmc.steps << "\nburn_in = " << c.mcmc.burn_in
    << "\nproposal_scale = " << fmt(c.mcmc.proposal_scale)
    << "\nbatch_size = " << c.mcmc.batch_size << "\nseed = " << c.mcmc.seed
    << "\ntune = " << (c.mcmc.tune ? "true" : "false") << "\n\n";
  o << "[sweep]\nsensors = " << fmt_list(c.sweep.sensors)
    << "\nfeatures = " << fmt_list(c.sweep.features)
    << "\nreplicates = " << c.sweep.replicates << "\n\n";
  o << "[scan]\nsamples = " << c.scan.samples << '\n';
  for (const auto& a : c.scan.axes)
    o << a.name << " = " << fmt(a.lo) << ':' << fmt(a.hi) << ':' << a.steps
      << (a.log_spaced ? ":log" : "") << '\n';
  o << "\n[output]\ndir = " << c.output << '\n';
  return o.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

std::string config_hash(const ExperimentConfig& config) {
  return sha256_hex(config_to_text(config));
}

// ---------------------------------------------------------------------------

Grid make_grid(const ExperimentConfig& c) {
  switch (c.kind) {
    case SystemKind::Ode: return Grid::interval(0.0, c.ode.t_end, c.cells);
    case SystemKind::Shift: return Grid::interval(c.shift_lo, c.shift_hi, c.cells);
    case SystemKind::Pde: return pde_grid(c.pde, c.nt, c.ny, c.nx);
  }
  throw ConfigError("unknown system kind");
}

std::vector<std::string> theta_keys(const ExperimentConfig& config) {
  std::vector<std::string> keys = {"lengthscale", "variance"};
  switch (config.kind) {
    case SystemKind::Ode: keys.insert(keys.end(), {"p0", "p1", "p2"}); break;
    case SystemKind::Pde:
      keys.insert(keys.end(), {"velocity_x", "velocity_y", "diffusivity"});
      break;
    case SystemKind::Shift: keys.push_back("shift"); break;
  }
  return keys;
}

SystemHandles make_system(const ExperimentConfig& config, const Theta& theta) {
  const auto keys = theta_keys(config);
  for (const auto& [k, v] : theta)
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ConfigError("'" + k + "' is not a parameter of the " + to_string(config.kind) +
                        " system");
  auto get = [&theta](const char* k, double fallback) {
    const auto it = theta.find(k);
    return it == theta.end() ? fallback : it->second;
  };
  switch (config.kind) {
    case SystemKind::Ode: {
      OdeParams p = config.ode;
      p.p0 = get("p0", p.p0);
      p.p1 = get("p1", p.p1);
      p.p2 = get("p2", p.p2);
      p.validate();
      return {[p](const Field& f) { return ode_forward(p, f); },
              [p](const Field& h) { return ode_adjoint(p, h); }};
    }
    case SystemKind::Pde: {
      PdeParams p = config.pde;
      p.velocity[0] = get("velocity_x", p.velocity[0]);
      p.velocity[1] = get("velocity_y", p.velocity[1]);
      p.diffusivity = get("diffusivity", p.diffusivity);
      p.validate();
      return {[p](const Field& f) { return pde_forward(p, f); },
              [p](const Field& h) { return pde_adjoint(p, h); }};
    }
    case SystemKind::Shift: {
      ShiftParams p = config.shift;
      p.shift = get("shift", p.shift);
      return {[p](const Field& f) { return shift_forward(p, f); },
              [p](const Field& h) { return shift_adjoint(p, h); }};
    }
  }
  throw ConfigError("unknown system kind");
}

namespace {

constexpr std::uint64_t kHeldoutStream = 0x68656c646f7574ULL;
constexpr std::uint64_t kTruthStream = 0x7472757468ULL;

struct TimeWindow {
  double lo, hi;
};

std::vector<TimeWindow> time_windows(const ExperimentConfig& c) {
  std::vector<TimeWindow> out;
  const double t = c.pde.t_end;
  const auto w = static_cast<double>(c.sensors.time_windows);
  for (std::size_t j = 0; j < c.sensors.time_windows; ++j) {
    const double centre = (static_cast<double>(j) + 0.5) * t / w;
    out.push_back({std::max(0.0, centre - 0.5 * c.sensors.time_width),
                   std::min(t, centre + 0.5 * c.sensors.time_width)});
  }
  return out;
}

void add_pde_sensor(SensorSet& set, const ExperimentConfig& c, const Grid& grid,
                    double x, double y) {
  const double h = 0.5 * c.sensors.width;
  const SpatialBox box{x - h, x + h, y - h, y + h};
  for (const auto& tw : time_windows(c)) {
    set.windows.push_back(sensor_field(grid, box, tw.lo, tw.hi));
    set.centres.push_back({0.5 * (tw.lo + tw.hi), y, x});
  }
}

std::string time_rule(const ExperimentConfig& c) {
  std::ostringstream s;
  s << c.sensors.time_windows << " time windows of length " << c.sensors.time_width
    << " centred at (j + 0.5) T / " << c.sensors.time_windows << "; sensor squares of side "
    << c.sensors.width;
  return s.str();
}

}  // namespace

SensorSet training_sensors(const ExperimentConfig& c, const Grid& grid) {
  SensorSet set;
  if (c.kind != SystemKind::Pde) {
    const double lo = c.sensors.lo.value_or(grid.lower(0));
    const double hi = c.sensors.hi.value_or(grid.upper(0));
    const double w = (hi - lo) / static_cast<double>(c.sensors.count);
    for (std::size_t i = 0; i < c.sensors.count; ++i) {
      const double a = lo + static_cast<double>(i) * w;
      const double b = i + 1 == c.sensors.count ? hi : a + w;
      const double l[1] = {a}, u[1] = {b};
      set.windows.push_back(window_indicator(grid, l, u));
      set.centres.push_back({0.5 * (a + b)});
    }
    std::ostringstream s;
    s << "tile: " << c.sensors.count << " windows of length " << w << " tiling [" << lo
      << ", " << hi << ")";
    set.rule = s.str();
    return set;
  }
  if (c.sensors.rule == "grid") {
    const auto k = static_cast<std::size_t>(std::llround(std::sqrt(double(c.sensors.count))));
    const double lx = c.pde.x_hi - c.pde.x_lo;
    const double ly = c.pde.y_hi - c.pde.y_lo;
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < k; ++i)
        add_pde_sensor(set, c, grid,
                       c.pde.x_lo + (static_cast<double>(i) + 0.5) * lx / double(k),
                       c.pde.y_lo + (static_cast<double>(j) + 0.5) * ly / double(k));
    set.rule = "grid(" + std::to_string(k) + "): " + std::to_string(k * k) +
               " sensors on a uniform lattice inset by half a lattice cell; " + time_rule(c);
  } else {
    for (const auto& p : c.sensors.points) add_pde_sensor(set, c, grid, p[0], p[1]);
    set.rule = "list: " + std::to_string(c.sensors.points.size()) +
               " explicit sensor centres; " + time_rule(c);
  }
  return set;
}

SensorSet heldout_sensors(const ExperimentConfig& c, const Grid& grid) {
  SensorSet set;
  Rng rng = Rng::stream(c.seeds.data, kHeldoutStream);
  if (c.kind != SystemKind::Pde) {
    const double lo = c.sensors.lo.value_or(grid.lower(0));
    const double hi = c.sensors.hi.value_or(grid.upper(0));
    const double w = (hi - lo) / static_cast<double>(c.sensors.count);
    for (std::size_t i = 0; i < c.sensors.heldout; ++i) {
      const double a = lo + rng.uniform() * (hi - lo - w);
      const double l[1] = {a}, u[1] = {a + w};
      set.windows.push_back(window_indicator(grid, l, u));
      set.centres.push_back({a + 0.5 * w});
    }
    set.rule = "random: " + std::to_string(c.sensors.heldout) +
               " windows of the training length placed uniformly (data seed)";
    return set;
  }
  const double h = 0.5 * c.sensors.width;
  for (std::size_t i = 0; i < c.sensors.heldout; ++i) {
    const double x = c.pde.x_lo + h + rng.uniform() * (c.pde.x_hi - c.pde.x_lo - 2 * h);
    const double y = c.pde.y_lo + h + rng.uniform() * (c.pde.y_hi - c.pde.y_lo - 2 * h);
    add_pde_sensor(set, c, grid, x, y);
  }
  set.rule = "random: " + std::to_string(c.sensors.heldout) +
             " sensors placed uniformly (data seed); " + time_rule(c);
  return set;
}

FeatureBasis inference_basis(const ExperimentConfig& c) {
  const std::size_t dim = c.kind == SystemKind::Pde ? 3 : 1;
  return sample_basis(c.features, dim, c.kernel, c.seeds.basis);
}

Truth ground_truth(const ExperimentConfig& c, const Grid& grid, unsigned jobs) {
  Rng rng(c.seeds.data);
  if (c.truth.source == "shared") {
    const FeatureBasis basis = inference_basis(c);
    Eigen::VectorXd q(static_cast<Eigen::Index>(basis.size()));
    for (Eigen::Index m = 0; m < q.size(); ++m) q(m) = rng.normal();
    Field f = forcing_from_weights(basis, q, grid, jobs);
    return {std::move(f), std::move(q)};
  }
  const FeatureBasis basis = sample_basis(c.truth.features, grid.ndim(), c.truth.kernel,
                                          splitmix64(c.seeds.data ^ kTruthStream));
  Eigen::VectorXd q(static_cast<Eigen::Index>(basis.size()));
  for (Eigen::Index m = 0; m < q.size(); ++m) q(m) = rng.normal();
  return {forcing_from_weights(basis, q, grid, jobs), std::nullopt};
}

SyntheticData observe(const ExperimentConfig& c, const Grid& grid, Truth truth,
                      Field solution) {
  SensorSet train = training_sensors(c, grid);
  SensorSet held = heldout_sensors(c, grid);
  SyntheticData d{std::move(truth), std::move(solution), std::move(train), std::move(held),
                  {}, {}, {}, {}};
  d.noiseless = apply_windows(d.train.windows, d.solution);
  d.heldout_noiseless = apply_windows(d.heldout.windows, d.solution);
  Rng noise(c.seeds.noise);
  d.readings = d.noiseless;
  for (Eigen::Index i = 0; i < d.readings.size(); ++i) d.readings(i) += c.sigma * noise.normal();
  Rng held_noise = Rng::stream(c.seeds.noise, kHeldoutStream);
  d.heldout_readings = d.heldout_noiseless;
  for (Eigen::Index i = 0; i < d.heldout_readings.size(); ++i)
    d.heldout_readings(i) += c.sigma * held_noise.normal();
  return d;
}

SyntheticData simulate(const ExperimentConfig& c, unsigned jobs) {
  c.validate();
  const Grid grid = make_grid(c);
  Truth truth = ground_truth(c, grid, jobs);
  Field solution = make_system(c).forward(truth.forcing);
  return observe(c, grid, std::move(truth), std::move(solution));
}

ObservationSet training_set(const SyntheticData& d, double sigma) {
  return {d.train.windows, d.readings, std::max(sigma, kSigmaFloor)};
}

ObservationSet heldout_set(const SyntheticData& d, double sigma) {
  return {d.heldout.windows, d.heldout_readings, std::max(sigma, kSigmaFloor)};
}

namespace {

// Runs one pipeline stage, prefixing any library error with the stage name.
template <typename F>
auto staged(const char* stage, F&& fn) -> decltype(fn()) {
  const std::string where = std::string("stage ") + stage + ": ";
  try {
    return fn();
  } catch (const SolverError& e) {
    throw SolverError(where + e.detail(), e.step());
  } catch (const NumericalError& e) {
    throw NumericalError(where + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  } catch (const StructuralError& e) {
    throw StructuralError(where + e.what());
  } catch (const DomainError& e) {
    throw DomainError(where + e.what());
  }
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& c, const ObservationSet& obs,
                            unsigned jobs) {
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };
  obs.validate();
  const Grid& grid = obs.windows.front().grid();
  const SystemHandles system = make_system(c);

  const auto t0 = clock::now();
  const std::vector<Field> adjoints = staged(kStageNames[0], [&] {
    return solve_adjoint_bank(system.adjoint, obs.windows, jobs);
  });
  const auto t1 = clock::now();
  FeatureBasis basis = staged(kStageNames[1], [&] { return inference_basis(c); });
  Eigen::MatrixXd basis_matrix =
      staged(kStageNames[1], [&] { return eval_basis(basis, grid, jobs); });
  const auto t2 = clock::now();
  PhiMatrix phi = staged(kStageNames[2], [&] {
    return assemble_phi(adjoints, basis_matrix, grid, jobs);
  });
  phi.basis_seed = basis.seed();
  phi.solver = to_string(c.kind) + "_adjoint";
  const auto t3 = clock::now();
  const NormalEquations normal =
      staged(kStageNames[3], [&] { return normal_equations(phi.entries, obs.readings); });
  const auto t4 = clock::now();
  PosteriorQ post = staged(kStageNames[4], [&] {
    return posterior_q(normal, obs.sigma, GaussianPrior::standard(basis.size()));
  });
  const auto t5 = clock::now();

  PipelineResult r{std::move(basis), std::move(basis_matrix), std::move(phi),
                   std::move(post), {}};
  r.seconds = {seconds(t0, t1), seconds(t1, t2), seconds(t2, t3), seconds(t3, t4),
               seconds(t4, t5)};
  return r;
}

std::size_t median_interval_rank(std::size_t n) {
  // P(Bin(n, 1/2) <= j) accumulated in log space to stay finite for large n.
  std::size_t best = 1;
  double tail = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    tail += std::exp(std::lgamma(double(n) + 1) - std::lgamma(double(j) + 1) -
                     std::lgamma(double(n - j) + 1) - double(n) * std::log(2.0));
    // tail = P(B <= j) = P(B < j + 1)
    if (tail <= 0.025) best = std::min(j + 1, (n + 1) / 2);
    else break;
  }
  return best;
}

MedianSummary summarize_median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  MedianSummary s;
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  const std::size_t k = median_interval_rank(n);
  s.lo = values[k - 1];
  s.hi = values[n - k];
  return s;
}

}  // namespace adjgp
