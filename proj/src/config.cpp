#include "dpgen/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "dpgen/common.hpp"
#include "dpgen/rng.hpp"

namespace dpgen {

GeneratorSpec TrainConfig::generator_spec() const {
  GeneratorSpec g;
  g.latent_dim = latent_dim;
  g.embed_dim = embed_dim;
  g.num_classes = classes;
  g.channels = gen_channels;
  return g;
}

MlpSpec TrainConfig::discriminator_spec() const {
  std::vector<int64_t> widths{image_size * image_size};
  widths.insert(widths.end(), disc_hidden.begin(), disc_hidden.end());
  widths.push_back(1);
  return MlpSpec{widths, Activation::Tanh};
}

MlpSpec TrainConfig::classifier_spec() const {
  std::vector<int64_t> widths{image_size * image_size};
  widths.insert(widths.end(), cls_hidden.begin(), cls_hidden.end());
  widths.push_back(classes);
  return MlpSpec{widths, Activation::Tanh};
}

MlpSpec TrainConfig::encoder_spec() const {
  std::vector<int64_t> widths{image_size * image_size};
  widths.insert(widths.end(), enc_hidden.begin(), enc_hidden.end());
  widths.push_back(latent_dim);
  return MlpSpec{widths, Activation::Tanh};
}

EfMode TrainConfig::ef() const {
  if (ef_mode == "per_source") return EfMode::PerSource;
  if (ef_mode == "aggregate") return EfMode::Aggregate;
  throw ConfigError("ef_mode must be per_source or aggregate, got '" + ef_mode + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (data != "synth" && data != "idx") fail("data must be synth or idx");
  if (classes < 1 || classes > 255) fail("classes must be in [1,255]");
  if (image_size != 8 && image_size != 16) fail("image_size must be 8 or 16");
  if (latent_dim < 1 || embed_dim < 0) fail("latent_dim/embed_dim out of range");
  if (gen_channels.size() < 2) fail("gen_channels needs base plus at least one stage");
  if (generator_spec().out_h() != image_size)
    fail("gen_channels stage count does not reach image_size (2 stages -> 8, 3 -> 16)");
  if (k < 1) fail("k must be >= 1");
  if (batch < 1) fail("batch must be >= 1");
  if (iterations < 1) fail("iterations must be >= 1");
  if (n_dis < 0 || n_en < 0 || n_f < 0 || n_r < 0 || n_pre < 0) fail("loop counts must be >= 0");
  if (eta_d <= 0 || eta_c <= 0 || eta_g <= 0 || eta_e <= 0) fail("learning rates must be positive");
  if (gamma <= 0.0 || gamma > 1.0) fail("gamma must be in (0,1]");
  if (sigma <= 0.0) fail("sigma must be positive");
  if (c1 <= 0.0 || c2 <= 0.0) fail("clip thresholds must be positive");
  if (eps <= 0.0) fail("eps must be positive");
  if (delta <= 0.0 || delta >= 1.0) fail("delta must be in (0,1)");
  if (sigma_noise < 0.0) fail("sigma_noise must be nonnegative");
  if (gamma_recon < 0.0 || lambda_c < 0.0 || lambda_gp < 0.0) fail("loss weights must be nonnegative");
  if (gen_avg_decay < 0.0 || gen_avg_decay > 1.0) fail("gen_avg_decay must be in [0,1]");
  if (gen_momentum < 0.0 || gen_momentum >= 1.0) fail("gen_momentum must be in [0,1)");
  if (eta_g_halflife < 0) fail("eta_g_halflife must be nonnegative");
  if (eta_g_decay_start < 0) fail("eta_g_decay_start must be nonnegative");
  if (gen_weight_decay < 0.0) fail("gen_weight_decay must be nonnegative");
  if (gen_weight_lr_scale <= 0.0) fail("gen_weight_lr_scale must be positive");
  if (eval_interval < 1) fail("eval_interval must be >= 1");
  if (eval_samples < 2) fail("eval_samples must be >= 2");
  if (feat_hidden < 1 || feat_steps < 0) fail("feature classifier settings out of range");
  ef();  // validates ef_mode
}

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int64_t out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const uint64_t out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<int64_t> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("key '" + key + "': empty list entry");
    out.push_back(parse_int(key, item));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

std::string int_list_to_string(const std::vector<int64_t>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string double_to_string(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    if (kv.count(key)) throw ConfigError("duplicate key '" + key + "'");
    kv[key] = value;
  }

  TrainConfig cfg;
  bool eta_e_set = false, gamma_set = false;
  auto take = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) return {};
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  if (auto v = take("seed"); !v.empty()) cfg.seed = parse_u64("seed", v);
  if (auto v = take("data"); !v.empty()) cfg.data = v;
  if (auto v = take("classes"); !v.empty()) cfg.classes = static_cast<int>(parse_int("classes", v));
  if (auto v = take("synth_per_class"); !v.empty())
    cfg.synth_per_class = static_cast<int>(parse_int("synth_per_class", v));
  if (auto v = take("image_size"); !v.empty()) cfg.image_size = parse_int("image_size", v);
  if (auto v = take("latent_dim"); !v.empty()) cfg.latent_dim = parse_int("latent_dim", v);
  if (auto v = take("embed_dim"); !v.empty()) cfg.embed_dim = parse_int("embed_dim", v);
  if (auto v = take("gen_channels"); !v.empty()) cfg.gen_channels = parse_int_list("gen_channels", v);
  if (auto v = take("disc_hidden"); !v.empty()) cfg.disc_hidden = parse_int_list("disc_hidden", v);
  if (auto v = take("cls_hidden"); !v.empty()) cfg.cls_hidden = parse_int_list("cls_hidden", v);
  if (auto v = take("enc_hidden"); !v.empty()) cfg.enc_hidden = parse_int_list("enc_hidden", v);
  if (auto v = take("k"); !v.empty()) cfg.k = parse_int("k", v);
  if (auto v = take("batch"); !v.empty()) cfg.batch = parse_int("batch", v);
  if (auto v = take("iterations"); !v.empty()) cfg.iterations = parse_int("iterations", v);
  if (auto v = take("n_dis"); !v.empty()) cfg.n_dis = parse_int("n_dis", v);
  if (auto v = take("n_en"); !v.empty()) cfg.n_en = parse_int("n_en", v);
  if (auto v = take("n_f"); !v.empty()) cfg.n_f = parse_int("n_f", v);
  if (auto v = take("n_r"); !v.empty()) cfg.n_r = parse_int("n_r", v);
  if (auto v = take("n_pre"); !v.empty()) cfg.n_pre = parse_int("n_pre", v);
  if (auto v = take("eta_d"); !v.empty()) cfg.eta_d = parse_double("eta_d", v);
  if (auto v = take("eta_c"); !v.empty()) cfg.eta_c = parse_double("eta_c", v);
  if (auto v = take("eta_g"); !v.empty()) cfg.eta_g = parse_double("eta_g", v);
  if (auto v = take("eta_e"); !v.empty()) {
    cfg.eta_e = parse_double("eta_e", v);
    eta_e_set = true;
  }
  if (auto v = take("gamma"); !v.empty()) {
    cfg.gamma = parse_double("gamma", v);
    gamma_set = true;
  }
  if (auto v = take("sigma"); !v.empty()) cfg.sigma = parse_double("sigma", v);
  if (auto v = take("c1"); !v.empty()) cfg.c1 = parse_double("c1", v);
  if (auto v = take("c2"); !v.empty()) cfg.c2 = parse_double("c2", v);
  if (auto v = take("eps"); !v.empty()) cfg.eps = parse_double("eps", v);
  if (auto v = take("delta"); !v.empty()) cfg.delta = parse_double("delta", v);
  if (auto v = take("ef_mode"); !v.empty()) cfg.ef_mode = v;
  if (auto v = take("sigma_noise"); !v.empty()) cfg.sigma_noise = parse_double("sigma_noise", v);
  if (auto v = take("gamma_recon"); !v.empty()) cfg.gamma_recon = parse_double("gamma_recon", v);
  if (auto v = take("lambda_c"); !v.empty()) cfg.lambda_c = parse_double("lambda_c", v);
  if (auto v = take("lambda_gp"); !v.empty()) cfg.lambda_gp = parse_double("lambda_gp", v);
  if (auto v = take("single_label_batch"); !v.empty())
    cfg.single_label_batch = parse_bool("single_label_batch", v);
  if (auto v = take("gen_avg_decay"); !v.empty()) cfg.gen_avg_decay = parse_double("gen_avg_decay", v);
  if (auto v = take("gen_momentum"); !v.empty()) cfg.gen_momentum = parse_double("gen_momentum", v);
  if (auto v = take("eta_g_halflife"); !v.empty()) cfg.eta_g_halflife = parse_int("eta_g_halflife", v);
  if (auto v = take("eta_g_decay_start"); !v.empty())
    cfg.eta_g_decay_start = parse_int("eta_g_decay_start", v);
  if (auto v = take("gen_weight_decay"); !v.empty())
    cfg.gen_weight_decay = parse_double("gen_weight_decay", v);
  if (auto v = take("gen_weight_lr_scale"); !v.empty())
    cfg.gen_weight_lr_scale = parse_double("gen_weight_lr_scale", v);
  if (auto v = take("eval_interval"); !v.empty()) cfg.eval_interval = parse_int("eval_interval", v);
  if (auto v = take("eval_samples"); !v.empty()) cfg.eval_samples = parse_int("eval_samples", v);
  if (auto v = take("feat_hidden"); !v.empty()) cfg.feat_hidden = parse_int("feat_hidden", v);
  if (auto v = take("feat_steps"); !v.empty()) cfg.feat_steps = parse_int("feat_steps", v);
  if (auto v = take("feat_seed"); !v.empty()) cfg.feat_seed = parse_u64("feat_seed", v);

  if (!kv.empty()) {
    std::string unknown;
    for (const auto& [key, value] : kv) {
      if (!unknown.empty()) unknown += ", ";
      unknown += key;
    }
    throw ConfigError("unknown config key(s): " + unknown);
  }

  if (!eta_e_set) cfg.eta_e = cfg.eta_c;
  if (!gamma_set) cfg.gamma = 1.0 / static_cast<double>(cfg.k);
  cfg.validate();
  return cfg;
}

TrainConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_to_text(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "seed = " << cfg.seed << "\n";
  os << "data = " << cfg.data << "\n";
  os << "classes = " << cfg.classes << "\n";
  os << "synth_per_class = " << cfg.synth_per_class << "\n";
  os << "image_size = " << cfg.image_size << "\n";
  os << "latent_dim = " << cfg.latent_dim << "\n";
  os << "embed_dim = " << cfg.embed_dim << "\n";
  os << "gen_channels = " << int_list_to_string(cfg.gen_channels) << "\n";
  os << "disc_hidden = " << int_list_to_string(cfg.disc_hidden) << "\n";
  os << "cls_hidden = " << int_list_to_string(cfg.cls_hidden) << "\n";
  os << "enc_hidden = " << int_list_to_string(cfg.enc_hidden) << "\n";
  os << "k = " << cfg.k << "\n";
  os << "batch = " << cfg.batch << "\n";
  os << "iterations = " << cfg.iterations << "\n";
  os << "n_dis = " << cfg.n_dis << "\n";
  os << "n_en = " << cfg.n_en << "\n";
  os << "n_f = " << cfg.n_f << "\n";
  os << "n_r = " << cfg.n_r << "\n";
  os << "n_pre = " << cfg.n_pre << "\n";
  os << "eta_d = " << double_to_string(cfg.eta_d) << "\n";
  os << "eta_c = " << double_to_string(cfg.eta_c) << "\n";
  os << "eta_g = " << double_to_string(cfg.eta_g) << "\n";
  os << "eta_e = " << double_to_string(cfg.eta_e) << "\n";
  os << "gamma = " << double_to_string(cfg.gamma) << "\n";
  os << "sigma = " << double_to_string(cfg.sigma) << "\n";
  os << "c1 = " << double_to_string(cfg.c1) << "\n";
  os << "c2 = " << double_to_string(cfg.c2) << "\n";
  os << "eps = " << double_to_string(cfg.eps) << "\n";
  os << "delta = " << double_to_string(cfg.delta) << "\n";
  os << "ef_mode = " << cfg.ef_mode << "\n";
  os << "sigma_noise = " << double_to_string(cfg.sigma_noise) << "\n";
  os << "gamma_recon = " << double_to_string(cfg.gamma_recon) << "\n";
  os << "lambda_c = " << double_to_string(cfg.lambda_c) << "\n";
  os << "lambda_gp = " << double_to_string(cfg.lambda_gp) << "\n";
  os << "single_label_batch = " << (cfg.single_label_batch ? "true" : "false") << "\n";
  os << "gen_avg_decay = " << double_to_string(cfg.gen_avg_decay) << "\n";
  os << "gen_momentum = " << double_to_string(cfg.gen_momentum) << "\n";
  os << "eta_g_halflife = " << cfg.eta_g_halflife << "\n";
  os << "eta_g_decay_start = " << cfg.eta_g_decay_start << "\n";
  os << "gen_weight_decay = " << double_to_string(cfg.gen_weight_decay) << "\n";
  os << "gen_weight_lr_scale = " << double_to_string(cfg.gen_weight_lr_scale) << "\n";
  os << "eval_interval = " << cfg.eval_interval << "\n";
  os << "eval_samples = " << cfg.eval_samples << "\n";
  os << "feat_hidden = " << cfg.feat_hidden << "\n";
  os << "feat_steps = " << cfg.feat_steps << "\n";
  os << "feat_seed = " << cfg.feat_seed << "\n";
  return os.str();
}

uint64_t config_digest(const TrainConfig& cfg) {
  // Only keys that shape the training trajectory. Stopping criteria (
  // iterations, eps), logging cadence and metric pinning may change between
  // a save and a resume without invalidating the state.
  std::ostringstream os;
  os << cfg.seed << "|" << cfg.data << "|" << cfg.classes << "|" << cfg.synth_per_class << "|"
     << cfg.image_size << "|" << int_list_to_string(cfg.gen_channels) << "|"
     << int_list_to_string(cfg.disc_hidden) << "|" << int_list_to_string(cfg.cls_hidden) << "|"
     << int_list_to_string(cfg.enc_hidden) << "|" << cfg.latent_dim << "|" << cfg.embed_dim << "|"
     << cfg.k << "|" << cfg.batch << "|" << cfg.n_dis << "|" << cfg.n_en << "|" << cfg.n_f << "|"
     << cfg.n_r << "|" << cfg.n_pre << "|" << double_to_string(cfg.eta_d) << "|"
     << double_to_string(cfg.eta_c) << "|" << double_to_string(cfg.eta_g) << "|"
     << double_to_string(cfg.eta_e) << "|" << double_to_string(cfg.gamma) << "|"
     << double_to_string(cfg.sigma) << "|" << double_to_string(cfg.c1) << "|"
     << double_to_string(cfg.c2) << "|" << cfg.ef_mode << "|"
     << double_to_string(cfg.sigma_noise) << "|" << double_to_string(cfg.gamma_recon) << "|"
     << double_to_string(cfg.lambda_c) << "|" << double_to_string(cfg.lambda_gp) << "|"
     << (cfg.single_label_batch ? "1" : "0") << "|" << double_to_string(cfg.gen_avg_decay) << "|" << double_to_string(cfg.gen_momentum) << "|" << cfg.eta_g_halflife << "|" << cfg.eta_g_decay_start << "|" << double_to_string(cfg.gen_weight_decay) << "|"
     << double_to_string(cfg.gen_weight_lr_scale);
  return RngStream::fnv1a(os.str());
}

}  // namespace dpgen
