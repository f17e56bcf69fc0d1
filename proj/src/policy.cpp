#include "navlab/policy.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace navlab {

ParamLayout ParamLayout::make(const PolicyConfig& cfg) {
  ParamLayout layout;
  layout.cfg = cfg;
  const int e = cfg.embed_dim;
  const int H = cfg.lstm_hidden;
  auto add = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    layout.tensors.push_back({name, rows, cols, layout.total});
    layout.total += rows * cols;
  };
  const char* proj_names[4] = {"proj_goal", "proj_gps", "proj_compass",
                               "proj_proximity"};
  for (int j = 0; j < 4; ++j) {
    add(std::string(proj_names[j]) + "_W", e, kProjIn[j]);
    add(std::string(proj_names[j]) + "_b", e, 1);
  }
  add("action_embed", kActionVocab, e);
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    const std::string p = "lstm" + std::to_string(l);
    add(p + "_Wx", 4 * H, layout.lstm_in(l));
    add(p + "_Wh", 4 * H, H);
    add(p + "_b", 4 * H, 1);
  }
  add("head_W", kPolicyActions + 1, H);
  add("head_b", kPolicyActions + 1, 1);
  return layout;
}

const TensorSpec& ParamLayout::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw PolicyError("ParamLayout: no tensor named " + name);
}

ActionSample sample_action(const std::array<float, kPolicyActions>& logits,
                           std::mt19937_64& rng, SampleMode mode) {
  for (float v : logits)
    if (!std::isfinite(v)) throw PolicyError("sample_action: non-finite logits");
  const auto logp = log_softmax(logits);
  int chosen = 0;
  if (mode == SampleMode::Argmax) {
    for (int i = 1; i < kPolicyActions; ++i)
      if (logits[i] > logits[chosen]) chosen = i;
  } else {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0.0;
    chosen = kPolicyActions - 1;
    for (int i = 0; i < kPolicyActions; ++i) {
      cum += std::exp(static_cast<double>(logp[i]));
      if (u < cum) {
        chosen = i;
        break;
      }
    }
  }
  return {static_cast<Action>(chosen), static_cast<double>(logp[chosen])};
}

namespace {

// Orthonormal columns via modified Gram-Schmidt in double.
void orthogonal_fill(std::mt19937_64& rng, float* out, std::size_t rows,
                     std::size_t cols) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> col(cols, std::vector<double>(rows));
  for (auto& c : col)
    for (auto& v : c) v = gauss(rng);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < rows; ++i) dot += col[j][i] * col[k][i];
      for (std::size_t i = 0; i < rows; ++i) col[j][i] -= dot * col[k][i];
    }
    double norm = 0.0;
    for (double v : col[j]) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (auto& v : col[j]) v /= norm;
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j)
      out[r * cols + j] = static_cast<float>(col[j][r]);
}

void uniform_fill(std::mt19937_64& rng, float* out, std::size_t rows,
                  std::size_t cols, std::size_t fan_in) {
  const double s = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> uni(-s, s);
  for (std::size_t i = 0; i < rows * cols; ++i)
    out[i] = static_cast<float>(uni(rng));
}

}  // namespace

std::vector<float> init_params(std::mt19937_64& rng, const PolicyConfig& cfg) {
  if (cfg.embed_dim < 1 || cfg.lstm_layers < 1 || cfg.lstm_hidden < 1)
    throw PolicyError("init_params: all dimensions must be >= 1");
  const ParamLayout layout = ParamLayout::make(cfg);
  std::vector<float> params(layout.total, 0.0f);
  const int H = cfg.lstm_hidden;

  for (const auto& t : layout.tensors) {
    if (t.name.ends_with("_b")) {
      // biases stay zero; forget gate handled below
      continue;
    }
    if (t.name.ends_with("_Wh")) {
      orthogonal_fill(rng, params.data() + t.offset, t.rows, t.cols);
    } else {
      uniform_fill(rng, params.data() + t.offset, t.rows, t.cols, t.cols);
    }
  }
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    const std::size_t b = layout.lstm_b(l);
    for (int i = 0; i < H; ++i) params[b + H + i] = 1.0f;  // forget gate
  }
  return params;
}

std::vector<double> to_double(const std::vector<float>& params) {
  return std::vector<double>(params.begin(), params.end());
}

std::vector<float> to_float(const std::vector<double>& params) {
  std::vector<float> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    out[i] = static_cast<float>(params[i]);
  return out;
}

static const char* kCkptMagic = "navlab-checkpoint-v1";

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["magic"] = kCkptMagic;
  header["config"] = {{"embed_dim", ckpt.config.embed_dim},
                      {"lstm_layers", ckpt.config.lstm_layers},
                      {"lstm_hidden", ckpt.config.lstm_hidden}};
  header["seed"] = ckpt.seed;
  header["env_steps"] = ckpt.env_steps;
  header["param_count"] = ckpt.params.size();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw PolicyError("save_checkpoint: cannot open " + path);
  out << header.dump() << '\n';
  // little-endian float32 blob in declared tensor order
  out.write(reinterpret_cast<const char*>(ckpt.params.data()),
            static_cast<std::streamsize>(ckpt.params.size() * sizeof(float)));
  if (!out) throw PolicyError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PolicyError("load_checkpoint: cannot open " + path);
  std::string header_line;
  std::getline(in, header_line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw PolicyError(std::string("load_checkpoint: bad header: ") + e.what());
  }
  if (header.value("magic", std::string()) != kCkptMagic)
    throw PolicyError("load_checkpoint: magic mismatch in " + path);
  Checkpoint ckpt;
  ckpt.config.embed_dim = header["config"]["embed_dim"];
  ckpt.config.lstm_layers = header["config"]["lstm_layers"];
  ckpt.config.lstm_hidden = header["config"]["lstm_hidden"];
  ckpt.seed = header["seed"];
  ckpt.env_steps = header["env_steps"];
  const std::size_t count = header["param_count"];
  ckpt.params.resize(count);
  in.read(reinterpret_cast<char*>(ckpt.params.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
    throw PolicyError("load_checkpoint: truncated blob in " + path);
  const ParamLayout layout = ParamLayout::make(ckpt.config);
  if (layout.total != count)
    throw PolicyError("load_checkpoint: parameter count does not match config");
  return ckpt;
}

}  // namespace navlab
