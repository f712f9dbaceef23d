#include "jdiff/config.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "jdiff/manifest.hpp"

namespace jdiff {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Section-qualified key/value map from INI-style text.
std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not 'key = value': " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    kv[section.empty() ? key : section + "." + key] = value;
  }
  return kv;
}

struct Reader {
  std::map<std::string, std::string> kv;

  bool take(const std::string& key, std::string& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return false;
    out = it->second;
    kv.erase(it);
    return true;
  }
  void str(const std::string& key, std::string& out) { take(key, out); }
  void num(const std::string& key, int& out) {
    std::string v;
    if (take(key, v)) out = std::stoi(v);
  }
  void num(const std::string& key, uint64_t& out) {
    std::string v;
    if (take(key, v)) out = std::stoull(v);
  }
  void num(const std::string& key, double& out) {
    std::string v;
    if (take(key, v)) out = std::stod(v);
  }
  void ints(const std::string& key, std::vector<int>& out) {
    std::string v;
    if (!take(key, v)) return;
    out.clear();
    for (const std::string& s : split_csv(v)) out.push_back(std::stoi(s));
  }
  void bools(const std::string& key, std::vector<bool>& out) {
    std::string v;
    if (!take(key, v)) return;
    out.clear();
    for (const std::string& s : split_csv(v)) {
      if (s != "0" && s != "1" && s != "true" && s != "false")
        throw std::invalid_argument("config: '" + key + "' expects 0/1 entries, got '" + s + "'");
      out.push_back(s == "1" || s == "true");
    }
  }
  void strs(const std::string& key, std::vector<std::string>& out) {
    std::string v;
    if (take(key, v)) out = split_csv(v);
  }
};

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::vector<std::string>& overrides) {
  Reader r{parse_kv(text)};
  for (const std::string& ov : overrides) {
    size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config override must be section.key=value, got '" + ov + "'");
    r.kv[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }

  RunConfig c;
  r.num("run.seed", c.seed);
  r.str("run.outdir", c.outdir);
  r.num("schedule.timesteps", c.timesteps);
  r.num("schedule.beta_start", c.beta_start);
  r.num("schedule.beta_end", c.beta_end);
  r.num("model.base_width", c.base_width);
  r.ints("model.channel_mult", c.channel_mult);
  r.num("model.res_blocks", c.res_blocks);
  r.num("model.time_embed_dim", c.time_embed_dim);
  r.bools("model.attention", c.attention);
  r.num("optim.lr", c.lr);
  r.num("optim.warmup_steps", c.warmup_steps);
  r.num("optim.weight_decay", c.weight_decay);
  r.num("optim.beta1", c.beta1);
  r.num("optim.beta2", c.beta2);
  r.num("optim.eps", c.adam_eps);
  r.num("train.batch_size", c.batch_size);
  r.num("train.epochs", c.epochs);
  r.num("train.checkpoint_every", c.checkpoint_every);
  r.str("data.source", c.source);
  r.num("data.n_classes", c.n_classes);
  r.num("data.per_class", c.per_class);
  r.num("data.resolution", c.resolution);
  r.str("data.idx_images", c.idx_images);
  r.str("data.idx_labels", c.idx_labels);
  r.strs("data.cifar_batches", c.cifar_batches);
  r.num("data.quota", c.quota);
  r.num("data.target_h", c.target_h);
  r.num("data.target_w", c.target_w);
  r.str("data.resample", c.resample);
  r.str("sample.mode", c.mode);
  r.num("sample.count", c.sample_count);
  r.num("sample.chunk", c.sample_chunk);
  r.str("sample.condition_modality", c.condition_modality);
  r.num("sample.condition_class", c.condition_class);
  r.num("sample.fixed_condition_index", c.fixed_condition_index);
  r.num("eval.classifier_epochs", c.classifier_epochs);
  r.num("eval.is_splits", c.is_splits);

  if (!r.kv.empty()) throw std::invalid_argument("config: unknown key '" + r.kv.begin()->first + "'");
  if (c.source != "synthetic" && c.source != "files")
    throw std::invalid_argument("config: data.source must be 'synthetic' or 'files'");
  if (c.mode != "joint" && c.mode != "random" && c.mode != "predicted" && c.mode != "constant")
    throw std::invalid_argument("config: sample.mode must be joint|random|predicted|constant");
  return c;
}

RunConfig RunConfig::from_file(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse(buf.str(), overrides);
}

DenoiserConfig RunConfig::denoiser_config(int in_channels) const {
  DenoiserConfig d;
  d.in_channels = in_channels;
  d.base_width = base_width;
  d.channel_mult = channel_mult;
  d.res_blocks = res_blocks;
  d.time_embed_dim = time_embed_dim;
  d.attention = attention;
  return d;
}

OptimizerState RunConfig::optimizer_state() const {
  OptimizerState o;
  o.lr = lr;
  o.warmup_steps = warmup_steps;
  o.weight_decay = weight_decay;
  o.beta1 = beta1;
  o.beta2 = beta2;
  o.eps = adam_eps;
  return o;
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  auto ints = [](const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  std::string attn;
  for (size_t i = 0; i < attention.size(); ++i) attn += (i ? "," : "") + std::string(attention[i] ? "1" : "0");
  std::string cifar;
  for (size_t i = 0; i < cifar_batches.size(); ++i) cifar += (i ? "," : "") + cifar_batches[i];
  os << "[run]\nseed = " << seed << "\noutdir = " << outdir << "\n";
  os << "[schedule]\ntimesteps = " << timesteps << "\nbeta_start = " << beta_start << "\nbeta_end = " << beta_end
     << "\n";
  os << "[model]\nbase_width = " << base_width << "\nchannel_mult = " << ints(channel_mult)
     << "\nres_blocks = " << res_blocks << "\ntime_embed_dim = " << time_embed_dim << "\nattention = " << attn << "\n";
  os << "[optim]\nlr = " << lr << "\nwarmup_steps = " << warmup_steps << "\nweight_decay = " << weight_decay
     << "\nbeta1 = " << beta1 << "\nbeta2 = " << beta2 << "\neps = " << adam_eps << "\n";
  os << "[train]\nbatch_size = " << batch_size << "\nepochs = " << epochs
     << "\ncheckpoint_every = " << checkpoint_every << "\n";
  os << "[data]\nsource = " << source << "\nn_classes = " << n_classes << "\nper_class = " << per_class
     << "\nresolution = " << resolution << "\nidx_images = " << idx_images << "\nidx_labels = " << idx_labels
     << "\ncifar_batches = " << cifar << "\nquota = " << quota << "\ntarget_h = " << target_h
     << "\ntarget_w = " << target_w << "\nresample = " << resample << "\n";
  os << "[sample]\nmode = " << mode << "\ncount = " << sample_count << "\nchunk = " << sample_chunk
     << "\ncondition_modality = " << condition_modality << "\ncondition_class = " << condition_class
     << "\nfixed_condition_index = " << fixed_condition_index << "\n";
  os << "[eval]\nclassifier_epochs = " << classifier_epochs << "\nis_splits = " << is_splits << "\n";
  return os.str();
}

std::string RunConfig::digest() const { return sha256_hex(canonical()); }

}  // namespace jdiff
