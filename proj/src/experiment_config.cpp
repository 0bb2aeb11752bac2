#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pilotwave/experiment.hpp"

namespace pilotwave {

using nlohmann::json;

namespace {

// SAX pass that rejects duplicate object keys (the DOM parser would silently
// keep the last one).
class DuplicateKeyChecker : public nlohmann::json_sax<json> {
 public:
  bool null() override { return true; }
  bool boolean(bool) override { return true; }
  bool number_integer(number_integer_t) override { return true; }
  bool number_unsigned(number_unsigned_t) override { return true; }
  bool number_float(number_float_t, const string_t&) override { return true; }
  bool string(string_t&) override { return true; }
  bool binary(binary_t&) override { return true; }
  bool start_object(std::size_t) override {
    stack_.emplace_back();
    return true;
  }
  bool key(string_t& k) override {
    if (!stack_.back().insert(k).second)
      throw ParseError("duplicate key '" + k + "' in configuration");
    return true;
  }
  bool end_object() override {
    stack_.pop_back();
    return true;
  }
  bool start_array(std::size_t) override { return true; }
  bool end_array() override { return true; }
  bool parse_error(std::size_t pos, const std::string&,
                   const nlohmann::detail::exception& ex) override {
    throw ParseError("configuration is not valid JSON at byte " + std::to_string(pos) + ": " +
                     ex.what());
  }

 private:
  std::vector<std::set<std::string>> stack_;
};

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ValidationError(path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) fail(path + "." + key, "unknown key");
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double get_num(const json& obj, const std::string& path, const char* key, double fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number()) fail(path + "." + key, "expected a number");
  return v->get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key, int fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) fail(path + "." + key, "expected an integer");
  return v->get<int>();
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_boolean()) fail(path + "." + key, "expected a boolean");
  return v->get<bool>();
}

std::string get_str(const json& obj, const std::string& path, const char* key,
                    const std::string& fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_string()) fail(path + "." + key, "expected a string");
  return v->get<std::string>();
}

// scalar-or-list convenience for d-component vectors
std::vector<double> get_vec(const json& v, const std::string& path, int want) {
  std::vector<double> out;
  if (v.is_number()) {
    out.assign(1, v.get<double>());
  } else if (v.is_array()) {
    for (const json& e : v) {
      if (!e.is_number()) fail(path, "expected numbers");
      out.push_back(e.get<double>());
    }
  } else {
    fail(path, "expected a number or list of numbers");
  }
  if (want > 0 && static_cast<int>(out.size()) != want)
    fail(path, "expected " + std::to_string(want) + " components");
  return out;
}

cxd get_complex(const json& v, const std::string& path) {
  if (v.is_number()) return cxd(v.get<double>(), 0.0);
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return cxd(v[0].get<double>(), v[1].get<double>());
  fail(path, "expected a number or [re, im] pair");
}

std::vector<int> get_int_list(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected a list of integers");
  std::vector<int> out;
  for (const json& e : v) {
    if (!e.is_number_integer()) fail(path, "expected integers");
    out.push_back(e.get<int>());
  }
  return out;
}

StateRecipe parse_recipe(const json& obj, const std::string& path, int n, int d) {
  if (!obj.is_object()) fail(path, "expected an object");
  const std::string kind = get_str(obj, path, "kind", "");
  StateRecipe r;

  if (kind == "gaussian_product") {
    check_keys(obj, path, {"kind", "packets", "spinor", "allow_narrow"});
    r.kind = StateRecipe::Kind::GaussianProduct;
    const json* packets = find(obj, "packets");
    if (!packets || !packets->is_array() || static_cast<int>(packets->size()) != n)
      fail(path + ".packets", "expected one packet per particle");
    int i = 0;
    for (const json& p : *packets) {
      const std::string ppath = path + ".packets[" + std::to_string(i++) + "]";
      check_keys(p, ppath, {"center", "momentum", "width"});
      GaussianPacket packet;
      const json* center = find(p, "center");
      if (!center) fail(ppath + ".center", "required");
      packet.center = get_vec(*center, ppath + ".center", d);
      const json* momentum = find(p, "momentum");
      packet.momentum = momentum ? get_vec(*momentum, ppath + ".momentum", d)
                                 : std::vector<double>(d, 0.0);
      packet.width = get_num(p, ppath, "width", 1.0);
      r.packets.push_back(std::move(packet));
    }
  } else if (kind == "plane_wave") {
    check_keys(obj, path, {"kind", "wavenumbers", "spinor"});
    r.kind = StateRecipe::Kind::PlaneWave;
    const json* ks = find(obj, "wavenumbers");
    if (!ks || !ks->is_array() || static_cast<int>(ks->size()) != n)
      fail(path + ".wavenumbers", "expected one wavenumber vector per particle");
    int i = 0;
    for (const json& k : *ks)
      r.wavenumbers.push_back(get_vec(k, path + ".wavenumbers[" + std::to_string(i++) + "]", d));
  } else if (kind == "oscillator") {
    check_keys(obj, path, {"kind", "levels", "stiffness", "spinor"});
    r.kind = StateRecipe::Kind::Oscillator;
    const json* levels = find(obj, "levels");
    if (!levels || !levels->is_array() || static_cast<int>(levels->size()) != n)
      fail(path + ".levels", "expected one level vector per particle");
    int i = 0;
    for (const json& l : *levels) {
      const std::string lpath = path + ".levels[" + std::to_string(i++) + "]";
      std::vector<int> lv = l.is_number_integer() ? std::vector<int>{l.get<int>()}
                                                  : get_int_list(l, lpath);
      if (static_cast<int>(lv.size()) != d) fail(lpath, "expected space_dim components");
      r.levels.push_back(std::move(lv));
    }
    const json* stiff = find(obj, "stiffness");
    if (!stiff) fail(path + ".stiffness", "required");
    r.oscillator_stiffness = get_vec(*stiff, path + ".stiffness", n);
  } else if (kind == "superposition") {
    check_keys(obj, path, {"kind", "terms"});
    r.kind = StateRecipe::Kind::Superposition;
    const json* terms = find(obj, "terms");
    if (!terms || !terms->is_array() || terms->empty())
      fail(path + ".terms", "expected a nonempty list");
    int i = 0;
    for (const json& t : *terms) {
      const std::string tpath = path + ".terms[" + std::to_string(i++) + "]";
      check_keys(t, tpath, {"weight", "state"});
      const json* w = find(t, "weight");
      const json* s = find(t, "state");
      if (!w) fail(tpath + ".weight", "required");
      if (!s) fail(tpath + ".state", "required");
      r.terms.emplace_back(get_complex(*w, tpath + ".weight"),
                           std::make_shared<StateRecipe>(parse_recipe(*s, tpath + ".state", n, d)));
    }
  } else if (kind == "symmetrize" || kind == "antisymmetrize") {
    check_keys(obj, path, {"kind", "state"});
    r.kind = kind == "symmetrize" ? StateRecipe::Kind::Symmetrize
                                  : StateRecipe::Kind::Antisymmetrize;
    const json* s = find(obj, "state");
    if (!s) fail(path + ".state", "required");
    r.inner = std::make_shared<StateRecipe>(parse_recipe(*s, path + ".state", n, d));
  } else {
    fail(path + ".kind", "unknown state recipe '" + kind + "'");
  }

  if (const json* spinor = find(obj, "spinor")) {
    if (!spinor->is_array()) fail(path + ".spinor", "expected a list");
    int i = 0;
    for (const json& c : *spinor)
      r.spinor.push_back(get_complex(c, path + ".spinor[" + std::to_string(i++) + "]"));
  }
  r.allow_narrow = get_bool(obj, path, "allow_narrow", false);
  return r;
}

LawSpec parse_law(const json& obj, const std::string& path, int n) {
  if (!obj.is_object()) fail(path, "expected an object");
  check_keys(obj, path, {"kind", "real_set"});
  const std::string kind = get_str(obj, path, "kind", "full");
  LawSpec law;
  if (kind == "full") {
    law = LawSpec::full();
  } else if (kind == "reduced") {
    const json* rs = find(obj, "real_set");
    if (!rs) fail(path + ".real_set", "required for the reduced law");
    std::vector<int> members = get_int_list(*rs, path + ".real_set");
    try {
      law = LawSpec::reduced(IndexSet::from_members(members, n));
    } catch (const ValidationError& e) {
      fail(path + ".real_set", e.what());
    }
    if (law.real_set.is_empty()) fail(path + ".real_set", "must be nonempty");
  } else if (kind == "symmetrized") {
    law = LawSpec::symmetrized();
  } else {
    fail(path + ".kind", "unknown law '" + kind + "'");
  }
  return law;
}

}  // namespace

IntegratorControls RunConfig::controls() const {
  IntegratorControls c;
  c.stride = stride;
  c.pde_substeps = static_cast<int>(std::lround(stride / dt));
  c.eta = eta;
  c.max_halvings = max_halvings;
  c.fixed_substeps = fixed_substeps;
  return c;
}

Potential PotentialSpec::materialize(const Grid& grid) const {
  Potential p;
  switch (kind) {
    case Potential::Kind::Zero:
      p = Potential::zero();
      break;
    case Potential::Kind::Harmonic:
      p = Potential::harmonic(stiffness.empty()
                                  ? std::vector<double>(grid.num_particles(), 1.0)
                                  : stiffness);
      break;
    case Potential::Kind::ScalarField:
      p = Potential::scalar_field(scalar);
      break;
    case Potential::Kind::MatrixField:
      p = Potential::matrix_field(matrix, grid.params().spin_dim);
      break;
  }
  p.validate_for(grid);
  return p;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  {
    DuplicateKeyChecker checker;
    json::sax_parse(text, &checker);
  }
  json root = json::parse(text);
  if (!root.is_object()) throw ParseError(origin + ": top-level JSON must be an object");

  RunConfig cfg;
  cfg.raw_json = root.dump();

  check_keys(root, "config",
             {"grid", "model", "potential", "state", "evolution", "experiment", "integrator",
              "seed", "output_dir", "dump"});

  // grid
  const json* grid = find(root, "grid");
  if (!grid) fail("config.grid", "required");
  check_keys(*grid, "grid",
             {"num_particles", "space_dim", "points_per_axis", "box", "memory_budget_mb"});
  cfg.grid.num_particles = get_int(*grid, "grid", "num_particles", 1);
  cfg.grid.space_dim = get_int(*grid, "grid", "space_dim", 1);
  cfg.grid.points_per_axis = get_int(*grid, "grid", "points_per_axis", 256);
  if (const json* box = find(*grid, "box")) {
    std::vector<double> b = get_vec(*box, "grid.box", 2);
    cfg.grid.x_min = b[0];
    cfg.grid.x_max = b[1];
  }
  const int budget_mb = get_int(*grid, "grid", "memory_budget_mb", 2048);
  if (budget_mb < 1) fail("grid.memory_budget_mb", "must be positive");
  cfg.grid.memory_budget_bytes = static_cast<std::size_t>(budget_mb) << 20;

  const int n = cfg.grid.num_particles;
  const int d = cfg.grid.space_dim;

  // model
  cfg.model.masses.assign(n, 1.0);
  if (const json* model = find(root, "model")) {
    check_keys(*model, "model", {"hbar", "masses", "spin_dim"});
    cfg.model.hbar = get_num(*model, "model", "hbar", 1.0);
    cfg.model.spin_dim = get_int(*model, "model", "spin_dim", 1);
    if (const json* masses = find(*model, "masses"))
      cfg.model.masses = get_vec(*masses, "model.masses", n);
  }
  try {
    cfg.model.validate(n);
  } catch (const ValidationError& e) {
    fail("model", e.what());
  }

  // potential
  cfg.potential.kind = Potential::Kind::Zero;
  if (const json* pot = find(root, "potential")) {
    check_keys(*pot, "potential", {"kind", "stiffness", "values", "matrix_values"});
    const std::string kind = get_str(*pot, "potential", "kind", "zero");
    if (kind == "zero") {
      cfg.potential.kind = Potential::Kind::Zero;
    } else if (kind == "harmonic") {
      cfg.potential.kind = Potential::Kind::Harmonic;
      if (const json* st = find(*pot, "stiffness"))
        cfg.potential.stiffness = get_vec(*st, "potential.stiffness", n);
    } else if (kind == "scalar_field") {
      cfg.potential.kind = Potential::Kind::ScalarField;
      const json* values = find(*pot, "values");
      if (!values) fail("potential.values", "required");
      cfg.potential.scalar = get_vec(*values, "potential.values", 0);
    } else if (kind == "matrix_field") {
      cfg.potential.kind = Potential::Kind::MatrixField;
      const json* values = find(*pot, "matrix_values");
      if (!values || !values->is_array()) fail("potential.matrix_values", "required list");
      int i = 0;
      for (const json& c : *values)
        cfg.potential.matrix.push_back(
            get_complex(c, "potential.matrix_values[" + std::to_string(i++) + "]"));
    } else {
      fail("potential.kind", "unknown potential '" + kind + "'");
    }
  }

  // state
  const json* state = find(root, "state");
  if (!state) fail("config.state", "required");
  cfg.state = parse_recipe(*state, "state", n, d);

  // evolution
  cfg.dt = 1e-3;
  cfg.stride = 1e-2;
  if (const json* evo = find(root, "evolution")) {
    check_keys(*evo, "evolution", {"dt", "stride"});
    cfg.dt = get_num(*evo, "evolution", "dt", 1e-3);
    cfg.stride = get_num(*evo, "evolution", "stride", 1e-2);
  }
  if (!(cfg.dt > 0)) fail("evolution.dt", "must be positive");
  const double ratio = cfg.stride / cfg.dt;
  if (!(cfg.stride > 0) || std::abs(ratio - std::lround(ratio)) > 1e-9)
    fail("evolution.stride", "must be a whole multiple of dt");

  // experiment
  const json* exp = find(root, "experiment");
  if (!exp) fail("config.experiment", "required");
  check_keys(*exp, "experiment",
             {"kind", "law", "law_b", "observables", "unordered", "region", "T", "samples",
              "seeds", "num_seeds", "min_passing_seeds", "alpha", "bins", "sample_times",
              "velocity_scale", "wrong_density"});
  const std::string ekind = get_str(*exp, "experiment", "kind", "equivariance");
  if (ekind == "equivariance")
    cfg.experiment.kind = ExperimentSpec::Kind::Equivariance;
  else if (ekind == "equivalence")
    cfg.experiment.kind = ExperimentSpec::Kind::Equivalence;
  else if (ekind == "jump")
    cfg.experiment.kind = ExperimentSpec::Kind::Jump;
  else
    fail("experiment.kind", "unknown experiment '" + ekind + "'");

  if (const json* law = find(*exp, "law")) cfg.experiment.law = parse_law(*law, "experiment.law", n);
  if (const json* law_b = find(*exp, "law_b"))
    cfg.experiment.law_b = parse_law(*law_b, "experiment.law_b", n);
  cfg.experiment.unordered = get_bool(*exp, "experiment", "unordered", false);
  if (const json* obs = find(*exp, "observables")) {
    std::vector<int> members = get_int_list(*obs, "experiment.observables");
    try {
      cfg.experiment.observables = IndexSet::from_members(members, n);
    } catch (const ValidationError& e) {
      fail("experiment.observables", e.what());
    }
  }
  if (const json* region = find(*exp, "region")) {
    check_keys(*region, "experiment.region", {"lo", "hi"});
    Region r = Region::whole();
    if (const json* lo = find(*region, "lo"); lo && !lo->is_null()) r.lo = lo->get<double>();
    if (const json* hi = find(*region, "hi"); hi && !hi->is_null()) r.hi = hi->get<double>();
    if (!(r.hi > r.lo)) fail("experiment.region", "must have positive extent");
    cfg.experiment.region = r;
  }
  cfg.experiment.T = get_num(*exp, "experiment", "T", 1.0);
  if (!(cfg.experiment.T > 0)) fail("experiment.T", "must be positive");
  {
    const double st_ratio = cfg.experiment.T / cfg.stride;
    if (std::abs(st_ratio - std::lround(st_ratio)) > 1e-9)
      fail("experiment.T", "must be a whole number of strides");
  }
  const int samples = get_int(*exp, "experiment", "samples", 10000);
  if (samples < 100) fail("experiment.samples", "ensemble plans require n >= 100");
  cfg.experiment.samples = static_cast<std::size_t>(samples);

  if (const json* seeds = find(*exp, "seeds")) {
    if (!seeds->is_array() || seeds->empty()) fail("experiment.seeds", "expected a nonempty list");
    for (const json& s : *seeds) {
      if (!s.is_number_integer()) fail("experiment.seeds", "expected integers");
      cfg.experiment.seeds.push_back(s.get<uint64_t>());
    }
  } else {
    const int num_seeds = get_int(*exp, "experiment", "num_seeds", 5);
    if (num_seeds < 1) fail("experiment.num_seeds", "must be >= 1");
    for (int i = 0; i < num_seeds; ++i) cfg.experiment.seeds.push_back(0);  // filled from seed below
  }

  cfg.experiment.alpha = get_num(*exp, "experiment", "alpha", 0.01);
  if (!(cfg.experiment.alpha > 0 && cfg.experiment.alpha < 1))
    fail("experiment.alpha", "must lie in (0, 1)");
  cfg.experiment.bins = get_int(*exp, "experiment", "bins", 64);
  if (cfg.experiment.bins < 2 || cfg.experiment.bins > 4096)
    fail("experiment.bins", "must lie in [2, 4096]");
  if (const json* st = find(*exp, "sample_times"))
    cfg.experiment.sample_times = get_vec(*st, "experiment.sample_times", 0);
  for (double t : cfg.experiment.sample_times) {
    const double q = t / cfg.stride;
    if (t < 0 || t > cfg.experiment.T || std::abs(q - std::lround(q)) > 1e-9)
      fail("experiment.sample_times", "must be stride boundaries inside [0, T]");
  }
  cfg.experiment.velocity_scale = get_num(*exp, "experiment", "velocity_scale", 1.0);
  cfg.experiment.wrong_density = get_bool(*exp, "experiment", "wrong_density", false);
  cfg.experiment.min_passing_seeds = get_int(*exp, "experiment", "min_passing_seeds", 0);

  if (cfg.experiment.kind == ExperimentSpec::Kind::Equivalence) {
    if (!cfg.experiment.unordered && cfg.experiment.observables.is_empty())
      fail("experiment.observables", "required for a labeled equivalence experiment");
  }
  if (cfg.experiment.kind == ExperimentSpec::Kind::Jump && !cfg.experiment.region)
    fail("experiment.region", "required for a jump experiment");

  // integrator overrides
  if (const json* integ = find(root, "integrator")) {
    check_keys(*integ, "integrator", {"eta", "max_halvings", "fixed_substeps"});
    cfg.eta = get_num(*integ, "integrator", "eta", 0.5);
    if (!(cfg.eta > 0)) fail("integrator.eta", "must be positive");
    cfg.max_halvings = get_int(*integ, "integrator", "max_halvings", 24);
    cfg.fixed_substeps = get_int(*integ, "integrator", "fixed_substeps", 0);
  }

  // dump-state options
  if (const json* dump = find(root, "dump")) {
    check_keys(*dump, "dump", {"time", "filename"});
    cfg.dump_time = get_num(*dump, "dump", "time", 0.0);
    if (cfg.dump_time < 0) fail("dump.time", "must be nonnegative");
    cfg.dump_filename = get_str(*dump, "dump", "filename", "state.bin");
  }

  // top-level scalars
  const json* seed = find(root, "seed");
  if (seed) {
    if (!seed->is_number_integer()) fail("config.seed", "expected an integer");
    cfg.seed = seed->get<uint64_t>();
  }
  cfg.output_dir = get_str(root, "config", "output_dir", "out");

  // derive per-repetition seeds when only a count was given
  for (std::size_t i = 0; i < cfg.experiment.seeds.size(); ++i)
    if (cfg.experiment.seeds[i] == 0)
      cfg.experiment.seeds[i] = substream_seed(cfg.seed, StreamTag::Generic, 100 + i);
  if (cfg.experiment.min_passing_seeds <= 0) {
    const int s = static_cast<int>(cfg.experiment.seeds.size());
    cfg.experiment.min_passing_seeds = (4 * s + 4) / 5;  // ceil(0.8 s)
  }
  if (cfg.experiment.min_passing_seeds > static_cast<int>(cfg.experiment.seeds.size()))
    fail("experiment.min_passing_seeds", "exceeds the number of seeds");

  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open configuration file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace pilotwave
