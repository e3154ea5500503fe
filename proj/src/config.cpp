#include "fedsamp/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedsamp/errors.hpp"

namespace fedsamp {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ArgumentError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(d);
  } catch (const std::exception&) {
    throw ArgumentError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ArgumentError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ArgumentError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

SchemeKind scheme_from_name(const std::string& name) {
  if (name == "proposed") return SchemeKind::kProposed;
  if (name == "uniform") return SchemeKind::kUniform;
  if (name == "weighted") return SchemeKind::kWeighted;
  if (name == "statistical") return SchemeKind::kStatistical;
  if (name == "full") return SchemeKind::kFull;
  throw ArgumentError("unknown sampling scheme '" + name + "'");
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "dataset") {
    if (value != "synthetic" && value != "csv")
      throw ArgumentError("dataset must be 'synthetic' or 'csv'");
    cfg.dataset_kind = value;
  } else if (key == "synthetic.alpha") {
    cfg.synthetic_alpha = to_double(key, value);
  } else if (key == "synthetic.beta") {
    cfg.synthetic_beta = to_double(key, value);
  } else if (key == "synthetic.dim") {
    cfg.synthetic_dim = to_int(key, value);
  } else if (key == "synthetic.classes") {
    cfg.synthetic_classes = to_int(key, value);
  } else if (key == "synthetic.samples") {
    cfg.synthetic_samples = to_int(key, value);
  } else if (key == "csv.path") {
    cfg.csv_path = value;
  } else if (key == "clients") {
    cfg.clients = to_int(key, value);
  } else if (key == "partition.exponent") {
    cfg.partition_exponent = to_double(key, value);
  } else if (key == "partition.classes_min") {
    cfg.partition_classes_min = to_int(key, value);
  } else if (key == "partition.classes_max") {
    cfg.partition_classes_max = to_int(key, value);
  } else if (key == "holdout") {
    cfg.holdout = to_double(key, value);
  } else if (key == "K") {
    cfg.K = to_int(key, value);
  } else if (key == "E") {
    cfg.E = to_int(key, value);
  } else if (key == "batch_size") {
    cfg.batch_size = to_int(key, value);
  } else if (key == "lambda") {
    cfg.lambda = to_double(key, value);
  } else if (key == "lr.mode") {
    if (value == "harmonic")
      cfg.lr.kind = LrSchedule::Kind::kHarmonic;
    else if (value == "theory")
      cfg.lr.kind = LrSchedule::Kind::kTheory;
    else if (value == "constant")
      cfg.lr.kind = LrSchedule::Kind::kConstant;
    else
      throw ArgumentError("lr.mode must be harmonic, theory or constant");
  } else if (key == "lr.eta0") {
    cfg.lr.eta0 = to_double(key, value);
  } else if (key == "lr.mu") {
    cfg.lr.mu = to_double(key, value);
  } else if (key == "lr.gamma") {
    cfg.lr.gamma = to_double(key, value);
  } else if (key == "delay.dist") {
    if (value == "uniform")
      cfg.delay.kind = DelayDistribution::kUniformRange;
    else if (value == "exponential")
      cfg.delay.kind = DelayDistribution::kExponential;
    else if (value == "fixed")
      cfg.delay.kind = DelayDistribution::kFixed;
    else if (value == "explicit")
      cfg.delay.kind = DelayDistribution::kExplicit;
    else
      throw ArgumentError("delay.dist must be uniform, exponential, fixed or explicit");
  } else if (key == "delay.lo") {
    cfg.delay.lo = to_double(key, value);
  } else if (key == "delay.hi") {
    cfg.delay.hi = to_double(key, value);
  } else if (key == "delay.rate") {
    cfg.delay.rate = to_double(key, value);
  } else if (key == "delay.value") {
    cfg.delay.value = to_double(key, value);
  } else if (key == "delay.values") {
    cfg.delay.values.clear();
    for (const auto& item : split_list(value)) cfg.delay.values.push_back(to_double(key, item));
  } else if (key == "schemes") {
    cfg.schemes.clear();
    for (const auto& item : split_list(value)) cfg.schemes.push_back(scheme_from_name(item));
  } else if (key == "seeds") {
    cfg.seeds.clear();
    for (const auto& item : split_list(value)) cfg.seeds.push_back(to_u64(key, item));
  } else if (key == "target.mode") {
    if (value != "auto" && value != "absolute")
      throw ArgumentError("target.mode must be 'auto' or 'absolute'");
    cfg.target_mode = value;
  } else if (key == "target.loss") {
    cfg.target_loss = to_double(key, value);
  } else if (key == "target.fraction") {
    cfg.target_fraction = to_double(key, value);
  } else if (key == "target.probe_rounds") {
    cfg.target_probe_rounds = to_int(key, value);
  } else if (key == "fs.fractions") {
    cfg.fs_fractions.clear();
    for (const auto& item : split_list(value)) cfg.fs_fractions.push_back(to_double(key, item));
  } else if (key == "epsilon0") {
    cfg.epsilon0 = to_double(key, value);
  } else if (key == "round_cap") {
    cfg.round_cap = to_int(key, value);
  } else if (key == "cold_restart") {
    cfg.cold_restart = to_bool(key, value);
  } else if (key == "threads") {
    cfg.threads = to_int(key, value);
  } else if (key == "out") {
    cfg.out_dir = value;
  } else {
    throw ArgumentError("unknown config key '" + key + "'");
  }
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.clients < 1) throw ArgumentError("clients must be >= 1");
  if (cfg.K < 1 || cfg.K > cfg.clients) throw ArgumentError("K must be in [1, clients]");
  if (cfg.E < 1) throw ArgumentError("E must be >= 1");
  if (cfg.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (cfg.lambda < 0.0) throw ArgumentError("lambda must be >= 0");
  if (cfg.holdout < 0.0 || cfg.holdout >= 1.0) throw ArgumentError("holdout must be in [0, 1)");
  if (cfg.schemes.empty()) throw ArgumentError("no schemes configured");
  if (cfg.seeds.empty()) throw ArgumentError("no seeds configured");
  if (cfg.fs_fractions.empty()) throw ArgumentError("need at least one fs fraction");
  for (double f : cfg.fs_fractions)
    if (f <= 0.0 || f >= 1.0) throw ArgumentError("fs fractions must lie in (0, 1)");
  if (cfg.target_mode == "absolute" && !(cfg.target_loss > 0.0))
    throw ArgumentError("absolute target mode needs target.loss > 0");
  if (cfg.target_mode == "auto") {
    if (cfg.target_fraction <= 0.0 || cfg.target_fraction >= 1.0)
      throw ArgumentError("target.fraction must lie in (0, 1)");
    if (cfg.target_probe_rounds < 1) throw ArgumentError("target.probe_rounds must be >= 1");
  }
  if (cfg.dataset_kind == "csv" && cfg.csv_path.empty())
    throw ArgumentError("csv dataset needs csv.path");
  if (cfg.dataset_kind == "synthetic") {
    if (cfg.synthetic_dim < 1 || cfg.synthetic_classes < 2)
      throw ArgumentError("synthetic dataset needs dim >= 1 and classes >= 2");
    if (cfg.synthetic_samples < cfg.clients)
      throw ArgumentError("synthetic.samples must cover one sample per client");
  }
}

std::string resolved_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "# resolved configuration (" << kVersion << ")\n";
  out << "dataset = " << cfg.dataset_kind << "\n";
  out << "synthetic.alpha = " << fmt(cfg.synthetic_alpha) << "\n";
  out << "synthetic.beta = " << fmt(cfg.synthetic_beta) << "\n";
  out << "synthetic.dim = " << cfg.synthetic_dim << "\n";
  out << "synthetic.classes = " << cfg.synthetic_classes << "\n";
  out << "synthetic.samples = " << cfg.synthetic_samples << "\n";
  if (!cfg.csv_path.empty()) out << "csv.path = " << cfg.csv_path << "\n";
  out << "clients = " << cfg.clients << "\n";
  out << "partition.exponent = " << fmt(cfg.partition_exponent) << "\n";
  out << "partition.classes_min = " << cfg.partition_classes_min << "\n";
  out << "partition.classes_max = " << cfg.partition_classes_max << "\n";
  out << "holdout = " << fmt(cfg.holdout) << "\n";
  out << "K = " << cfg.K << "\n";
  out << "E = " << cfg.E << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "lambda = " << fmt(cfg.lambda) << "\n";
  out << "lr.mode = "
      << (cfg.lr.kind == LrSchedule::Kind::kHarmonic
              ? "harmonic"
              : cfg.lr.kind == LrSchedule::Kind::kTheory ? "theory" : "constant")
      << "\n";
  out << "lr.eta0 = " << fmt(cfg.lr.eta0) << "\n";
  out << "lr.mu = " << fmt(cfg.lr.mu) << "\n";
  out << "lr.gamma = " << fmt(cfg.lr.gamma) << "\n";
  out << "delay.dist = "
      << (cfg.delay.kind == DelayDistribution::kUniformRange
              ? "uniform"
              : cfg.delay.kind == DelayDistribution::kExponential
                    ? "exponential"
                    : cfg.delay.kind == DelayDistribution::kFixed ? "fixed" : "explicit")
      << "\n";
  out << "delay.lo = " << fmt(cfg.delay.lo) << "\n";
  out << "delay.hi = " << fmt(cfg.delay.hi) << "\n";
  out << "delay.rate = " << fmt(cfg.delay.rate) << "\n";
  out << "delay.value = " << fmt(cfg.delay.value) << "\n";
  if (!cfg.delay.values.empty()) {
    out << "delay.values = ";
    for (size_t i = 0; i < cfg.delay.values.size(); ++i)
      out << (i ? "," : "") << fmt(cfg.delay.values[i]);
    out << "\n";
  }
  out << "schemes = ";
  for (size_t i = 0; i < cfg.schemes.size(); ++i)
    out << (i ? "," : "") << scheme_name(cfg.schemes[i]);
  out << "\n";
  out << "seeds = ";
  for (size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
  out << "\n";
  out << "target.mode = " << cfg.target_mode << "\n";
  out << "target.loss = " << fmt(cfg.target_loss) << "\n";
  out << "target.fraction = " << fmt(cfg.target_fraction) << "\n";
  out << "target.probe_rounds = " << cfg.target_probe_rounds << "\n";
  out << "fs.fractions = ";
  for (size_t i = 0; i < cfg.fs_fractions.size(); ++i)
    out << (i ? "," : "") << fmt(cfg.fs_fractions[i]);
  out << "\n";
  out << "epsilon0 = " << fmt(cfg.epsilon0) << "\n";
  out << "round_cap = " << cfg.round_cap << "\n";
  out << "cold_restart = " << (cfg.cold_restart ? "true" : "false") << "\n";
  out << "threads = " << cfg.threads << "\n";
  out << "out = " << cfg.out_dir << "\n";
  return out.str();
}

}  // namespace fedsamp
