#include "urmf/harness/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

namespace urmf::harness {
namespace {

template <typename C, typename F>
void for_each_field(C& c, F&& f) {
  f("lambda_IB", c.lambda_IB);
  f("lambda_1", c.lambda_1);
  f("lambda_2", c.lambda_2);
  f("lambda_3", c.lambda_3);
  f("tau", c.tau);
  f("d", c.d);
  f("d_t", c.d_t);
  f("d_i", c.d_i);
  f("n", c.n);
  f("m", c.m);
  f("H", c.H);
  f("L", c.L);
  f("D", c.D);
  f("ffn_expansion", c.ffn_expansion);
  f("fusion_eps", c.fusion_eps);
  f("log_var_min", c.log_var_min);
  f("log_var_max", c.log_var_max);
  f("lr", c.lr);
  f("beta1", c.beta1);
  f("beta2", c.beta2);
  f("adam_eps", c.adam_eps);
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("seed", c.seed);
  f("no_align", c.no_align);
  f("no_ib_kl", c.no_ib_kl);
  f("no_reg", c.no_reg);
  f("no_ucl", c.no_ucl);
  f("no_dynamic_fusion", c.no_dynamic_fusion);
  f("standard_transformer", c.standard_transformer);
  f("ucl_denominator", c.ucl_denominator);
  f("train_corrupt_p", c.train_corrupt_p);
  f("train_corrupt_modality", c.train_corrupt_modality);
}

template <typename C, typename F>
void for_each_synth_field(C& c, F&& f) {
  f("clusters", c.clusters);
  f("n", c.n);
  f("m", c.m);
  f("d_t", c.d_t);
  f("d_i", c.d_i);
  f("noise_text", c.noise_text);
  f("noise_image", c.noise_image);
  f("n_samples", c.n_samples);
  f("seed", c.seed);
}

void parse_value(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("expected a number, got '" + s + "'");
}

template <typename T>
  requires std::is_unsigned_v<T>
void parse_value(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
}

void parse_value(const std::string& s, bool& out) {
  if (s == "true" || s == "1") out = true;
  else if (s == "false" || s == "0") out = false;
  else throw std::invalid_argument("expected true/false, got '" + s + "'");
}

void parse_value(const std::string& s, objectives::UclDenominator& out) {
  if (s == "verbatim") out = objectives::UclDenominator::verbatim;
  else if (s == "infonce") out = objectives::UclDenominator::infonce;
  else throw std::invalid_argument("expected verbatim or infonce, got '" + s + "'");
}

void parse_value(const std::string& s, CorruptionTarget& out) {
  if (s == "none") out = CorruptionTarget::none;
  else if (s == "text") out = CorruptionTarget::text;
  else if (s == "image") out = CorruptionTarget::image;
  else if (s == "both") out = CorruptionTarget::both;
  else throw std::invalid_argument("expected none, text, image or both, got '" + s + "'");
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
  requires std::is_unsigned_v<T>
std::string format_value(T v) {
  return std::to_string(v);
}

std::string format_value(bool v) { return v ? "true" : "false"; }

std::string format_value(objectives::UclDenominator v) {
  return v == objectives::UclDenominator::verbatim ? "verbatim" : "infonce";
}

std::string format_value(CorruptionTarget v) {
  switch (v) {
    case CorruptionTarget::none: return "none";
    case CorruptionTarget::text: return "text";
    case CorruptionTarget::image: return "image";
    case CorruptionTarget::both: return "both";
  }
  return "none";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename C, typename Visit>
C parse_key_values(const std::string& text, C base, Visit visit, const char* what) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(what) + " line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    bool found = false;
    visit(base, [&](const char* name, auto& field) {
      if (key != name) return;
      found = true;
      try {
        parse_value(value, field);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(where + key + ": " + e.what());
      }
    });
    if (!found) throw ConfigError(where + "unknown key '" + key + "'");
  }
  return base;
}

}  // namespace

void TrainConfig::validate() const {
  loss_weights().validate();
  model_dims().validate();
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (contrastive loss needs pairs)");
  if (n == 0 || m == 0) throw ConfigError("n and m must be positive");
  if (!(fusion_eps >= 0.0)) throw ConfigError("fusion_eps must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(train_corrupt_p >= 0.0 && train_corrupt_p <= 1.0)) throw ConfigError("train_corrupt_p outside [0, 1]");
}

ModelDims TrainConfig::model_dims() const {
  ModelDims dims;
  dims.d_t = d_t;
  dims.d_i = d_i;
  dims.d = d;
  dims.heads = H;
  dims.layers = L;
  dims.latent = D;
  dims.ffn_expansion = ffn_expansion;
  dims.log_var_min = log_var_min;
  dims.log_var_max = log_var_max;
  return dims;
}

ForwardOptions TrainConfig::forward_options(uncertainty::Mode mode) const {
  ForwardOptions o;
  o.ordering = standard_transformer ? interaction::Ordering::standard : interaction::Ordering::urmf;
  o.dynamic_fusion = !no_dynamic_fusion;
  o.fusion_eps = fusion_eps;
  o.mode = mode;
  return o;
}

objectives::LossWeights TrainConfig::loss_weights() const {
  return {lambda_IB, lambda_1, lambda_2, lambda_3, tau};
}

objectives::TermMask TrainConfig::term_mask() const { return {no_ib_kl, no_reg, no_align, no_ucl}; }

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  return parse_key_values(text, base, [](auto& c, auto&& f) { for_each_field(c, f); }, "config");
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for_each_field(config, [&](const char* name, const auto& field) {
    out += name;
    out += " = ";
    out += format_value(field);
    out += '\n';
  });
  return out;
}

data::SynthSpec parse_synth_spec(const std::string& text, data::SynthSpec base) {
  return parse_key_values(text, base, [](auto& c, auto&& f) { for_each_synth_field(c, f); }, "synth spec");
}

}  // namespace urmf::harness
