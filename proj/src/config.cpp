#include "fairgrid/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "fairgrid/csv.hpp"
#include "fairgrid/error.hpp"

namespace fairgrid {
namespace {

[[noreturn]] void fail(const std::string& key, std::string_view what) {
  throw ConfigError(fmt::format("{}: {}", key, what));
}

// Re-labels a ConfigError with the key it came from.
template <class F>
auto keyed(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const NotImplementedError& e) {
    throw NotImplementedError(fmt::format("{}: {}", key, e.what()));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", key, e.what()));
  }
}

std::string scalar(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) fail(key, "expected a scalar");
  return node.Scalar();
}

double real(const YAML::Node& node, const std::string& key) {
  const auto v = parse_double(scalar(node, key));
  if (!v || !std::isfinite(*v)) fail(key, fmt::format("'{}' is not a finite number", node.Scalar()));
  return *v;
}

std::optional<std::int64_t> parse_int(std::string_view text) {
  std::int64_t v = 0;
  const char* begin = text.data();
  if (!text.empty() && text.front() == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || begin == text.data() + text.size()) return std::nullopt;
  return v;
}

std::int64_t integer(const YAML::Node& node, const std::string& key) {
  const auto v = parse_int(scalar(node, key));
  if (!v) fail(key, fmt::format("'{}' is not an integer", node.Scalar()));
  return *v;
}

bool boolean(const YAML::Node& node, const std::string& key) {
  const std::string s = scalar(node, key);
  if (s == "true" || s == "True" || s == "TRUE" || s == "yes") return true;
  if (s == "false" || s == "False" || s == "FALSE" || s == "no") return false;
  fail(key, fmt::format("'{}' is not a boolean", s));
}

// Scalars or a single scalar promoted to a one-element list.
std::vector<YAML::Node> items(const YAML::Node& node, const std::string& key) {
  std::vector<YAML::Node> out;
  if (node.IsSequence()) {
    for (const auto& n : node) out.push_back(n);
  } else if (node.IsScalar()) {
    out.push_back(node);
  } else if (!node.IsNull()) {
    fail(key, "expected a list");
  }
  return out;
}

std::vector<std::string> strings(const YAML::Node& node, const std::string& key) {
  std::vector<std::string> out;
  for (const auto& n : items(node, key)) out.push_back(scalar(n, key));
  return out;
}

std::vector<double> reals(const YAML::Node& node, const std::string& key) {
  std::vector<double> out;
  for (const auto& n : items(node, key)) out.push_back(real(n, key));
  return out;
}

// Quoted scalars stay strings; otherwise integer, then real, then string.
ParamValue param_value(const YAML::Node& node, const std::string& key) {
  const std::string s = scalar(node, key);
  if (node.Tag() == "!") return s;
  if (auto i = parse_int(s)) return *i;
  if (auto d = parse_double(s)) return *d;
  return s;
}

// Map section that rejects keys it was never asked about.
class Section {
 public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) fail(path_, "expected a mapping");
  }

  YAML::Node operator[](const std::string& key) {
    known_.insert(key);
    if (!node_ || node_.IsNull()) return YAML::Node();
    return node_[key];
  }
  bool has(const std::string& key) {
    const YAML::Node n = (*this)[key];
    return n && !n.IsNull();
  }
  std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const std::string k = kv.first.as<std::string>();
      if (!known_.count(k)) fail(key(k), "unknown key");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> known_;
};

std::vector<ParamMap> cartesian(const YAML::Node& params, const std::string& key) {
  std::vector<ParamMap> out = {{}};
  if (!params || params.IsNull()) return out;
  if (!params.IsMap()) fail(key, "expected a mapping of parameter lists");
  std::map<std::string, std::vector<ParamValue>> axes;
  for (const auto& kv : params) {
    const std::string name = kv.first.as<std::string>();
    const std::string k = key + "." + name;
    auto& values = axes[name];
    for (const auto& n : items(kv.second, k)) values.push_back(param_value(n, k));
    if (values.empty()) fail(k, "empty value list");
  }
  for (const auto& [name, values] : axes) {
    std::vector<ParamMap> next;
    for (const ParamMap& partial : out) {
      for (const ParamValue& v : values) {
        ParamMap m = partial;
        m[name] = v;
        next.push_back(std::move(m));
      }
    }
    out = std::move(next);
  }
  return out;
}

BaseGrid parse_base(const YAML::Node& node, const std::string& key) {
  if (node.IsScalar()) {
    return {keyed(key, [&] { return parse_base_kind(node.Scalar()); }), {ParamMap{}}};
  }
  Section s(node, key);
  BaseGrid b;
  if (!s.has("kind")) fail(s.key("kind"), "missing");
  b.kind = keyed(s.key("kind"), [&] { return parse_base_kind(scalar(s["kind"], s.key("kind"))); });
  const bool grid = s.has("params");
  const bool explicit_maps = s.has("param_maps");
  if (grid && explicit_maps) fail(key, "give either params or param_maps, not both");
  if (explicit_maps) {
    const YAML::Node maps = s["param_maps"];
    if (!maps.IsSequence() || maps.size() == 0) fail(s.key("param_maps"), "expected a nonempty list of mappings");
    for (std::size_t i = 0; i < maps.size(); ++i) {
      const std::string k = fmt::format("{}[{}]", s.key("param_maps"), i);
      if (!maps[i].IsMap() && !maps[i].IsNull()) fail(k, "expected a mapping");
      ParamMap m;
      if (maps[i].IsMap()) {
        for (const auto& kv : maps[i]) {
          const std::string name = kv.first.as<std::string>();
          m[name] = param_value(kv.second, k + "." + name);
        }
      }
      b.param_maps.push_back(std::move(m));
    }
  } else {
    b.param_maps = cartesian(s["params"], s.key("params"));
  }
  s.finish();
  return b;
}

void parse_data(Section s, DataSource& d, const std::filesystem::path& base_dir) {
  const bool has_path = s.has("path");
  const bool has_synth = s.has("synthetic");
  if (has_path == has_synth) fail("data", "give exactly one of path or synthetic");
  DatasetSchema& schema = d.schema;
  if (has_synth) {
    Section syn(s["synthetic"], "data.synthetic");
    SyntheticSource src;
    if (syn.has("n")) {
      const auto n = integer(syn["n"], "data.synthetic.n");
      if (n < 20) fail("data.synthetic.n", "must be >= 20");
      src.n = static_cast<std::size_t>(n);
    }
    if (syn.has("spd")) src.spd = real(syn["spd"], "data.synthetic.spd");
    if (syn.has("base_rate")) src.base_rate = real(syn["base_rate"], "data.synthetic.base_rate");
    if (syn.has("seed")) src.seed = static_cast<std::uint64_t>(integer(syn["seed"], "data.synthetic.seed"));
    syn.finish();
    d.synthetic = src;
    schema.label = "label";
    schema.favorable = "1";
    schema.protected_attribute = "group";
    schema.privileged = "1";
  } else {
    std::filesystem::path p = scalar(s["path"], "data.path");
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    d.path = p.lexically_normal();
    for (const char* required : {"label", "favorable", "protected", "privileged"}) {
      if (!s.has(required)) fail(s.key(required), "missing");
    }
  }
  if (s.has("label")) schema.label = scalar(s["label"], "data.label");
  if (s.has("favorable")) schema.favorable = scalar(s["favorable"], "data.favorable");
  if (s.has("protected")) schema.protected_attribute = scalar(s["protected"], "data.protected");
  if (s.has("privileged")) schema.privileged = scalar(s["privileged"], "data.privileged");
  if (s.has("categorical")) schema.categorical = strings(s["categorical"], "data.categorical");
  if (s.has("drop")) schema.drop = strings(s["drop"], "data.drop");
  if (s.has("keep_protected")) schema.keep_protected = boolean(s["keep_protected"], "data.keep_protected");
  s.finish();
}

void parse_mitigation_params(Section s, MitigationOptions& m) {
  if (s.has("roc")) {
    Section roc(s["roc"], "grid.mitigation_params.roc");
    if (roc.has("bands")) m.roc_bands = reals(roc["bands"], "grid.mitigation_params.roc.bands");
    roc.finish();
  }
  if (s.has("ceo")) {
    Section ceo(s["ceo"], "grid.mitigation_params.ceo");
    if (ceo.has("cost")) {
      m.ceo_cost = keyed(ceo.key("cost"), [&] { return parse_ceo_cost(scalar(ceo["cost"], ceo.key("cost"))); });
    }
    ceo.finish();
  }
  if (s.has("egr")) {
    Section egr(s["egr"], "grid.mitigation_params.egr");
    if (egr.has("constraint")) {
      m.egr.constraint = keyed(egr.key("constraint"),
                               [&] { return parse_egr_constraint(scalar(egr["constraint"], egr.key("constraint"))); });
    }
    if (egr.has("epsilon")) m.egr.epsilon = real(egr["epsilon"], egr.key("epsilon"));
    if (egr.has("rounds")) m.egr.rounds = static_cast<int>(integer(egr["rounds"], egr.key("rounds")));
    if (egr.has("bound")) m.egr.bound = real(egr["bound"], egr.key("bound"));
    if (egr.has("eta")) m.egr.eta = real(egr["eta"], egr.key("eta"));
    egr.finish();
    keyed("grid.mitigation_params.egr", [&] {
      m.egr.validate();
      return 0;
    });
  }
  s.finish();
}

void parse_grid(Section s, GridConfig& g) {
  if (!s.has("bases")) fail("grid.bases", "missing");
  const YAML::Node bases = s["bases"];
  if (!bases.IsSequence()) fail("grid.bases", "expected a list");
  for (std::size_t i = 0; i < bases.size(); ++i) g.bases.push_back(parse_base(bases[i], fmt::format("grid.bases[{}]", i)));
  if (!s.has("thresholds")) fail("grid.thresholds", "missing");
  g.thresholds = reals(s["thresholds"], "grid.thresholds");
  for (std::size_t i = 0; i < g.thresholds.size(); ++i) {
    const double t = g.thresholds[i];
    if (!(t > 0.0 && t < 1.0)) fail("grid.thresholds", fmt::format("{} outside (0, 1)", format_double(t)));
    if (i > 0 && !(t > g.thresholds[i - 1])) fail("grid.thresholds", "must be strictly increasing");
  }
  if (s.has("mitigations")) {
    for (const std::string& m : strings(s["mitigations"], "grid.mitigations")) {
      g.mitigations.push_back(keyed("grid.mitigations", [&] { return parse_mitigation_id(m); }));
    }
  } else {
    g.mitigations = {MitigationId::NONE};
  }
  if (s.has("mitigation_params")) parse_mitigation_params(Section(s["mitigation_params"], "grid.mitigation_params"), g.mitigation);
  s.finish();
}

void parse_criterion(Section s, CostCriterion& c) {
  auto metric = [&](const char* name) {
    return keyed(s.key(name), [&] { return parse_metric_id(scalar(s[name], s.key(name))); });
  };
  if (s.has("acc_metric")) c.acc_metric = metric("acc_metric");
  if (s.has("fair_metric")) c.fair_metric = metric("fair_metric");
  if (s.has("alpha")) c.alpha = real(s["alpha"], "criterion.alpha");
  if (s.has("beta")) c.beta = real(s["beta"], "criterion.beta");
  s.finish();
  keyed("criterion", [&] {
    c.validate();
    return 0;
  });
}

void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail("--set", fmt::format("'{}' is not of the form section.key=value", assignment));
  const std::string path = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    fail(path, fmt::format("unparsable override value: {}", e.what()));
  }
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) fail(path, "empty key segment");
    parts.push_back(part);
  }
  if (parts.size() < 2) fail(path, "override keys need a section, e.g. cv.k=5");
  YAML::Node cur = root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (cur[parts[i]] && !cur[parts[i]].IsMap() && !cur[parts[i]].IsNull()) {
      fail(path, fmt::format("'{}' is not a section", parts[i]));
    }
    YAML::Node next = cur[parts[i]];
    cur.reset(next);
  }
  cur[parts.back()] = value;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  if (root.IsMap() && root["config"] && root["fairgrid_version"]) root = YAML::Clone(root["config"]);
  if (!root.IsMap()) throw ConfigError("config: expected a mapping at the top level");
  for (const std::string& o : overrides) apply_override(root, o);

  Section top(root, "");
  RunConfig cfg;
  if (!top.has("data")) fail("data", "missing section");
  parse_data(Section(top["data"], "data"), cfg.data, base_dir);
  if (!top.has("grid")) fail("grid", "missing section");
  parse_grid(Section(top["grid"], "grid"), cfg.grid);
  {
    Section cv(top["cv"], "cv");
    if (cv.has("k")) cfg.grid.cv_k = static_cast<int>(integer(cv["k"], "cv.k"));
    if (cv.has("seed")) cfg.grid.seed = static_cast<std::uint64_t>(integer(cv["seed"], "cv.seed"));
    cv.finish();
    if (cfg.grid.cv_k < 2) fail("cv.k", "must be >= 2");
  }
  parse_criterion(Section(top["criterion"], "criterion"), cfg.grid.criterion);
  {
    Section run(top["run"], "run");
    if (run.has("jobs")) {
      const auto jobs = integer(run["jobs"], "run.jobs");
      if (jobs < 0) fail("run.jobs", "must be >= 0");
      cfg.run.jobs = static_cast<unsigned>(jobs);
    }
    if (run.has("output_dir")) cfg.run.output_dir = scalar(run["output_dir"], "run.output_dir");
    run.finish();
  }
  {
    Section metrics(top["metrics"], "metrics");
    if (metrics.has("cns_neighbors")) {
      const auto k = integer(metrics["cns_neighbors"], "metrics.cns_neighbors");
      if (k < 1) fail("metrics.cns_neighbors", "must be >= 1");
      cfg.grid.mitigation.cns_neighbors = static_cast<std::size_t>(k);
    }
    if (metrics.has("gei_alpha")) cfg.grid.mitigation.gei_alpha = real(metrics["gei_alpha"], "metrics.gei_alpha");
    metrics.finish();
  }
  top.finish();
  cfg.grid.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read config file {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path(), overrides);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json d;
  if (data.synthetic) {
    d["synthetic"] = {{"n", data.synthetic->n},
                      {"spd", data.synthetic->spd},
                      {"base_rate", data.synthetic->base_rate},
                      {"seed", data.synthetic->seed}};
  } else {
    d["path"] = std::filesystem::absolute(data.path).lexically_normal().string();
  }
  d["label"] = data.schema.label;
  d["favorable"] = data.schema.favorable;
  d["protected"] = data.schema.protected_attribute;
  d["privileged"] = data.schema.privileged;
  d["categorical"] = data.schema.categorical;
  d["drop"] = data.schema.drop;
  d["keep_protected"] = data.schema.keep_protected;

  nlohmann::json bases = nlohmann::json::array();
  for (const BaseGrid& b : grid.bases) {
    nlohmann::json maps = nlohmann::json::array();
    for (const ParamMap& m : b.param_maps) maps.push_back(params_to_json(m));
    bases.push_back({{"kind", to_string(b.kind)}, {"param_maps", maps}});
  }
  nlohmann::json mitigations = nlohmann::json::array();
  for (MitigationId m : grid.mitigations) mitigations.push_back(to_string(m));
  const MitigationOptions& mo = grid.mitigation;
  nlohmann::json g = {{"bases", bases},
                      {"thresholds", grid.thresholds},
                      {"mitigations", mitigations},
                      {"mitigation_params",
                       {{"roc", {{"bands", mo.roc_bands}}},
                        {"ceo", {{"cost", to_string(mo.ceo_cost)}}},
                        {"egr",
                         {{"constraint", to_string(mo.egr.constraint)},
                          {"epsilon", mo.egr.epsilon},
                          {"rounds", mo.egr.rounds},
                          {"bound", mo.egr.bound},
                          {"eta", mo.egr.eta}}}}}};
  return {{"data", d},
          {"grid", g},
          {"cv", {{"k", grid.cv_k}, {"seed", grid.seed}}},
          {"criterion",
           {{"acc_metric", to_string(grid.criterion.acc_metric)},
            {"fair_metric", to_string(grid.criterion.fair_metric)},
            {"alpha", grid.criterion.alpha},
            {"beta", grid.criterion.beta}}},
          {"run", {{"jobs", run.jobs}, {"output_dir", run.output_dir.string()}}},
          {"metrics", {{"cns_neighbors", mo.cns_neighbors}, {"gei_alpha", mo.gei_alpha}}}};
}

Dataset load_dataset(const DataSource& source) {
  if (source.synthetic) {
    const SyntheticSource& s = *source.synthetic;
    const Dataset raw = synth_biased(s.n, s.spd, s.base_rate, s.seed);
    return dataset_from_table(raw.to_csv_table(), source.schema);
  }
  return load_csv(source.path, source.schema);
}

}  // namespace fairgrid
