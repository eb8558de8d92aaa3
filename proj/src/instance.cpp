#include "hardchain/instance.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/QR>
#include <json.hpp>

#include "hardchain/errors.hpp"
#include "hardchain/rng.hpp"

namespace hardchain {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(Setting s) {
  switch (s) {
    case Setting::Deterministic: return "det";
    case Setting::Stochastic: return "stoch";
    case Setting::StochasticMSS: return "mss";
  }
  return "det";
}

Setting setting_from_string(const std::string& s) {
  if (s == "det" || s == "deterministic") return Setting::Deterministic;
  if (s == "stoch" || s == "stochastic") return Setting::Stochastic;
  if (s == "mss") return Setting::StochasticMSS;
  throw std::invalid_argument("unknown setting '" + s + "' (expected det, stoch or mss)");
}

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw InfeasibleParameters(std::string(name) + " must be positive and finite");
}

// Round down to an integer >= 1. A relative slack of 1e-12 keeps values such as
// 99.99999999999999 (from 2116 / 21.16) at their intended integer.
int round_count(double raw, const char* name, std::vector<std::string>& notes) {
  if (!std::isfinite(raw) || raw <= 0.0)
    throw InfeasibleParameters(std::string(name) + " < 1 after rounding (raw value " +
                               std::to_string(raw) + ")");
  const double slack = std::floor(raw * (1.0 + 1e-12));
  if (slack < 1.0) {
    std::ostringstream os;
    os << name << " clamped from " << raw << " to 1";
    notes.push_back(os.str());
    return 1;
  }
  if (slack > 1e9) throw InfeasibleParameters(std::string(name) + " exceeds 1e9");
  if (slack != raw) {
    std::ostringstream os;
    os << name << " rounded down from " << raw << " to " << slack;
    notes.push_back(os.str());
  }
  return static_cast<int>(slack);
}

double ell_for(const ProblemConstants& c) {
  if (c.ell) {
    require_positive(*c.ell, "ell");
    return *c.ell;
  }
  if (c.p == 1) return constants::kGradientLipschitz;
  throw InfeasibleParameters("ell_p for p = " + std::to_string(c.p) +
                             " has no closed value; supply a measured estimate");
}

long log_floor(double a, double b, double n) {
  // ceil(a * b * log(n)) with log(1) = 0
  return static_cast<long>(std::ceil(a * b * std::log(std::max(n, 1.0))));
}

}  // namespace

double mss_eps_ceiling(const ProblemConstants& c) {
  const double g = constants::kGradientBound;
  return 6.0 * c.sigma * c.sigma * constants::kMssLipschitz / (4.0 * g * g * g * c.delta * c.lbar);
}

InstanceParams params_for(Setting setting, const ProblemConstants& c) {
  require_positive(c.eps, "eps");
  require_positive(c.delta, "delta");
  if (c.p < 1) throw InfeasibleParameters("p must be >= 1");

  InstanceParams out;
  out.setting = setting;
  out.p = c.p;
  out.eps = c.eps;
  out.delta = c.delta;
  const double gamma = constants::kGradientBound;

  switch (setting) {
    case Setting::Deterministic: {
      require_positive(c.lipschitz, "L_p");
      const double ell = ell_for(c);
      const double p = c.p;
      out.ell = ell;
      out.lipschitz = c.lipschitz;
      out.beta = std::pow(ell * c.eps / c.lipschitz, 1.0 / p);
      out.alpha = c.lipschitz * std::pow(out.beta, p + 1.0) / ell;
      out.T_raw = constants::kDeterministicC0 * c.delta * std::pow(c.lipschitz / ell, 1.0 / p) *
                  std::pow(c.eps, -(1.0 + p) / p);
      out.T = round_count(out.T_raw, "T", out.notes);
      out.d_floor = std::max<long>(log_floor(200.0, out.T, out.T), out.T);
      break;
    }
    case Setting::Stochastic: {
      require_positive(c.lipschitz, "L");
      require_positive(c.sigma, "sigma");
      const double ell = c.ell.value_or(constants::kGradientLipschitz);
      out.ell = ell;
      out.lipschitz = c.lipschitz;
      out.sigma = c.sigma;
      out.beta = 2.0 * ell * c.eps / c.lipschitz;
      out.alpha = c.lipschitz * out.beta * out.beta / ell;
      const double by_value = c.delta * ell / (12.0 * c.lipschitz * out.beta * out.beta);
      const double by_variance =
          c.sigma * c.sigma * out.beta * out.beta / (4.0 * gamma * gamma * out.alpha * out.alpha);
      out.T_raw = std::min(by_value, by_variance);
      out.T = round_count(out.T_raw, "T", out.notes);
      out.columns_raw = out.T;
      out.columns = out.T;
      out.d_floor = 2L * out.T * out.T + out.T;
      break;
    }
    case Setting::StochasticMSS: {
      require_positive(c.lbar, "Lbar");
      require_positive(c.sigma, "sigma");
      const double ceiling = mss_eps_ceiling(c);
      if (c.eps > ceiling) {
        std::ostringstream os;
        os << "eps = " << c.eps << " exceeds the mss feasibility ceiling 6 sigma^2 l_hat / (4 gamma^3 Delta Lbar) = "
           << ceiling;
        throw InfeasibleParameters(os.str());
      }
      const double ell = c.ell.value_or(constants::kGradientLipschitz);
      out.ell = ell;
      out.lbar = c.lbar;
      out.sigma = c.sigma;
      out.lipschitz = 2.0 * ell * gamma * c.eps * c.lbar / (constants::kMssLipschitz * c.sigma);
      out.beta = 2.0 * ell * c.eps / out.lipschitz;
      out.alpha = out.lipschitz * out.beta * out.beta / ell;
      out.T_raw = out.lipschitz * c.delta / (48.0 * ell * c.eps * c.eps);
      out.columns_raw = c.sigma * c.sigma / (4.0 * gamma * gamma * c.eps * c.eps);
      out.T = round_count(out.T_raw, "T", out.notes);
      out.columns = std::max(round_count(out.columns_raw, "script-T", out.notes), out.T);
      const double sT = out.columns;
      out.d_floor = std::max(log_floor(2.0, sT * out.T, sT), 2L * out.columns * out.T + out.T);
      break;
    }
  }
  out.d = out.d_floor;
  out.R = 2.0 * out.beta * std::sqrt(static_cast<double>(out.T));
  out.R_hat = constants::kSoftProjectionScale * out.beta * std::sqrt(static_cast<double>(out.T));
  return out;
}

double lower_bound_value(Setting setting, const ProblemConstants& c, double c0) {
  switch (setting) {
    case Setting::Deterministic: {
      const double p = c.p;
      return c0 * c.delta * std::pow(c.lipschitz / ell_for(c), 1.0 / p) *
             std::pow(c.eps, -(1.0 + p) / p);
    }
    case Setting::Stochastic: {
      const double a = c.lipschitz * c.lipschitz * c.delta * c.delta;
      const double b = std::pow(c.sigma, 4.0);
      return c0 * std::min(a, b) / std::pow(c.eps, 4.0);
    }
    case Setting::StochasticMSS:
      return c0 * c.delta * c.lbar * c.sigma / std::pow(c.eps, 3.0);
  }
  return 0.0;
}

Eigen::Ref<const MatrixXd> RotationEmbedding::block(int i) const {
  if (block_dim == 0) throw std::logic_error("embedding has no block map");
  if (i < 1 || i > T) throw std::out_of_range("block index out of range");
  return blocks.middleCols(static_cast<Eigen::Index>(i - 1) * block_dim, block_dim);
}

namespace {

MatrixXd gaussian(long rows, long cols, CounterRng& rng) {
  MatrixXd g(rows, cols);
  for (long j = 0; j < cols; ++j)
    for (long i = 0; i < rows; ++i) g(i, j) = rng.normal();
  return g;
}

MatrixXd thin_q_positive(const MatrixXd& g) {
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(g.rows(), g.cols());
  const auto& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace

RotationEmbedding sample_haar(long d, int T, std::uint64_t seed) {
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  if (T > d) throw DimensionMismatch("sample_haar needs T <= d (T = " + std::to_string(T) +
                                     ", d = " + std::to_string(d) + ")");
  CounterRng rng(seed, streams::kHaar);
  RotationEmbedding emb;
  emb.d = d;
  emb.T = T;
  emb.seed = seed;
  emb.U = thin_q_positive(gaussian(d, T, rng));
  return emb;
}

void attach_blocks(RotationEmbedding& emb, int block_dim) {
  if (block_dim <= 0) {
    emb.block_dim = 0;
    emb.blocks.resize(emb.d, 0);
    return;
  }
  const long n = static_cast<long>(emb.T) * block_dim;
  if (emb.T + n > emb.d)
    throw InfeasibleParameters("block map needs d >= T + T * block_dim = " +
                               std::to_string(emb.T + n) + " (d = " + std::to_string(emb.d) + ")");
  CounterRng rng(emb.seed, streams::kBlocks);
  MatrixXd g = gaussian(emb.d, n, rng);
  for (int pass = 0; pass < 2; ++pass) g -= emb.U * (emb.U.transpose() * g);
  MatrixXd q = thin_q_positive(g);
  q -= emb.U * (emb.U.transpose() * q);
  emb.blocks = thin_q_positive(q);
  emb.block_dim = block_dim;
}

double AmbientDerivs::scale(int k) const { return alpha / std::pow(beta, k); }

MatrixXd AmbientDerivs::hessian_dense() const {
  if (order < 2) throw UnsupportedOrder("hessian requested from an order < 2 bundle");
  const MatrixXd& U = embedding->U;
  return scale(2) * U * chain.hess.dense() * U.transpose();
}

Instance::Instance(InstanceParams params, std::shared_ptr<const RotationEmbedding> emb,
                   std::vector<std::string> taint, int p_max, bool identity)
    : params_(std::move(params)),
      embedding_(std::move(emb)),
      taint_(std::move(taint)),
      kernel_(KernelParams{params_.T, p_max}),
      identity_(identity) {
  if (embedding_->T != params_.T) throw DimensionMismatch("embedding and params disagree on T");
}

Instance Instance::create(const InstanceParams& params, std::uint64_t seed,
                          const InstanceOptions& opts) {
  std::vector<std::string> taint;
  for (const auto& n : params.notes)
    if (n.find("clamped") != std::string::npos) taint.push_back("clamped: " + n);

  long d = opts.d.value_or(params.d_floor);
  if (d < params.d_floor) {
    if (!opts.allow_below_floor)
      throw InfeasibleParameters("d = " + std::to_string(d) + " is below the dimension floor " +
                                 std::to_string(params.d_floor));
    d = std::max<long>(d, 4L * params.T);
    taint.push_back("d_floor_override: d = " + std::to_string(d) + " < floor " +
                    std::to_string(params.d_floor));
  }
  d = std::max<long>(d, params.T);

  auto emb = std::make_shared<RotationEmbedding>(sample_haar(d, params.T, seed));
  if (params.setting != Setting::Deterministic && params.columns > 1) {
    const int full = 2 * params.columns;
    const int minimal = params.columns - 1;
    if (params.T + static_cast<long>(params.T) * full <= d) {
      attach_blocks(*emb, full);
    } else if (opts.allow_below_floor && params.T + static_cast<long>(params.T) * minimal <= d) {
      attach_blocks(*emb, minimal);
      taint.push_back("block_dim reduced to " + std::to_string(minimal));
    } else {
      throw InfeasibleParameters("d = " + std::to_string(d) +
                                 " cannot hold the hidden-subspace blocks");
    }
  }
  InstanceParams p = params;
  p.d = d;
  return Instance(std::move(p), std::move(emb), std::move(taint), opts.p_max, false);
}

Instance Instance::kernel_units(int T, int p_max, int columns) {
  InstanceParams p;
  p.setting = columns > 0 ? Setting::Stochastic : Setting::Deterministic;
  p.T = T;
  p.columns = columns;
  p.alpha = 1.0;
  p.beta = 1.0;
  p.eps = 1.0;
  p.T_raw = T;
  p.columns_raw = columns;
  const int block_dim = columns > 1 ? 2 * columns : 0;
  const long d = T + static_cast<long>(T) * block_dim;
  p.d = d;
  p.d_floor = d;
  p.R = 2.0 * std::sqrt(static_cast<double>(T));
  p.R_hat = constants::kSoftProjectionScale * std::sqrt(static_cast<double>(T));

  auto emb = std::make_shared<RotationEmbedding>();
  emb->d = d;
  emb->T = T;
  emb->seed = 0;
  const MatrixXd eye = MatrixXd::Identity(d, d);
  emb->U = eye.leftCols(T);
  emb->block_dim = block_dim;
  emb->blocks = eye.rightCols(d - T);
  return Instance(std::move(p), std::move(emb), {}, p_max, true);
}

void Instance::check_ambient(const VectorXd& x) const {
  if (x.size() != embedding_->d)
    throw DimensionMismatch("ambient point has length " + std::to_string(x.size()) +
                            ", expected d = " + std::to_string(embedding_->d));
}

VectorXd Instance::chain_coords(const VectorXd& x) const {
  check_ambient(x);
  if (identity_) return x.head(params_.T) / params_.beta;
  return embedding_->U.transpose() * x / params_.beta;
}

VectorXd Instance::ambient_from_chain(const VectorXd& y) const {
  if (y.size() != params_.T) throw DimensionMismatch("chain vector length != T");
  if (identity_) {
    VectorXd x = VectorXd::Zero(embedding_->d);
    x.head(params_.T) = params_.beta * y;
    return x;
  }
  return params_.beta * (embedding_->U * y);
}

AmbientDerivs Instance::tilde_eval(const VectorXd& x, int p) const {
  AmbientDerivs out;
  out.order = p;
  out.alpha = params_.alpha;
  out.beta = params_.beta;
  out.embedding = embedding_;
  out.chain_point = chain_coords(x);
  out.chain = kernel_.derivs(out.chain_point, p);
  out.value = params_.alpha * out.chain.value;
  if (p >= 1) {
    if (identity_) {
      out.grad = VectorXd::Zero(embedding_->d);
      out.grad.head(params_.T) = out.scale(1) * out.chain.grad;
    } else {
      out.grad = out.scale(1) * (embedding_->U * out.chain.grad);
    }
  }
  return out;
}

VectorXd Instance::tilde_gradient(const VectorXd& x) const { return tilde_eval(x, 1).grad; }

VectorXd Instance::chi(const VectorXd& x) const {
  const double r2 = params_.R_hat * params_.R_hat;
  return x / std::sqrt(1.0 + x.squaredNorm() / r2);
}

VectorXd Instance::chi_jvp(const VectorXd& x, const VectorXd& v) const {
  // D chi(x) = s I - s^3 x x^T / R_hat^2, symmetric, so this is also the VJP.
  const double r2 = params_.R_hat * params_.R_hat;
  const double s = 1.0 / std::sqrt(1.0 + x.squaredNorm() / r2);
  return s * v - (s * s * s * x.dot(v) / r2) * x;
}

Instance::HatValue Instance::hat_eval(const VectorXd& x) const {
  if (!(params_.R_hat > 0.0)) throw std::logic_error("instance has no soft-projection radius");
  const VectorXd z = chi(x);
  const AmbientDerivs inner = tilde_eval(z, 1);
  const double b2 = params_.beta * params_.beta;
  HatValue out;
  out.value = inner.value + params_.alpha / 10.0 * x.squaredNorm() / b2;
  out.grad = chi_jvp(x, inner.grad) + (params_.alpha / 5.0 / b2) * x;
  return out;
}

void Instance::set_kernel_hooks(KernelHooks hooks) {
  kernel_ = ChainKernel(kernel_.params(), std::move(hooks));
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_vector(const VectorXd& v) {
  return fnv1a(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::vector<unsigned char> encode_le(const MatrixXd& m) {
  std::vector<unsigned char> out(static_cast<std::size_t>(m.size()) * 8);
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    std::uint64_t bits;
    std::memcpy(&bits, m.data() + k, 8);
    for (int b = 0; b < 8; ++b)
      out[static_cast<std::size_t>(k) * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return out;
}

MatrixXd decode_le(const std::vector<unsigned char>& bytes, long rows, long cols) {
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * 8)
    throw FormatError("payload size does not match header dimensions");
  MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(k) * 8 + b]) << (8 * b);
    std::memcpy(m.data() + k, &bits, 8);
  }
  return m;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

nlohmann::json params_json(const InstanceParams& p) {
  return {{"setting", to_string(p.setting)}, {"p", p.p},           {"T", p.T},
          {"columns", p.columns},            {"d", p.d},           {"d_floor", p.d_floor},
          {"alpha", p.alpha},                {"beta", p.beta},     {"eps", p.eps},
          {"ell", p.ell},                    {"lipschitz", p.lipschitz}, {"delta", p.delta},
          {"lbar", p.lbar},                  {"sigma", p.sigma},   {"R", p.R},
          {"R_hat", p.R_hat},                {"T_raw", p.T_raw},   {"columns_raw", p.columns_raw},
          {"notes", p.notes}};
}

InstanceParams params_from_json(const nlohmann::json& j) {
  InstanceParams p;
  p.setting = setting_from_string(j.at("setting").get<std::string>());
  p.p = j.at("p").get<int>();
  p.T = j.at("T").get<int>();
  p.columns = j.at("columns").get<int>();
  p.d = j.at("d").get<long>();
  p.d_floor = j.at("d_floor").get<long>();
  p.alpha = j.at("alpha").get<double>();
  p.beta = j.at("beta").get<double>();
  p.eps = j.at("eps").get<double>();
  p.ell = j.at("ell").get<double>();
  p.lipschitz = j.at("lipschitz").get<double>();
  p.delta = j.at("delta").get<double>();
  p.lbar = j.at("lbar").get<double>();
  p.sigma = j.at("sigma").get<double>();
  p.R = j.at("R").get<double>();
  p.R_hat = j.at("R_hat").get<double>();
  p.T_raw = j.at("T_raw").get<double>();
  p.columns_raw = j.at("columns_raw").get<double>();
  p.notes = j.at("notes").get<std::vector<std::string>>();
  return p;
}

}  // namespace

SavedInstance save_instance(const Instance& inst, const std::string& prefix) {
  namespace fs = std::filesystem;
  SavedInstance saved;
  saved.header_path = prefix + ".json";
  saved.payload_path = prefix + ".u.bin";
  const auto bytes = encode_le(inst.embedding().U);
  saved.payload_hash = fnv1a(bytes.data(), bytes.size());
  {
    std::ofstream out(saved.payload_path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + saved.payload_path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  nlohmann::json header = {
      {"format", "hardchain-instance"},
      {"format_version", kInstanceFormatVersion},
      {"setting", to_string(inst.params().setting)},
      {"seed", inst.seed()},
      {"d", inst.d()},
      {"T", inst.T()},
      {"p_max", inst.kernel().params().p_max},
      {"block_dim", inst.embedding().block_dim},
      {"identity", inst.identity_embedding()},
      {"params", params_json(inst.params())},
      {"taint", inst.taint()},
      {"payload",
       {{"file", fs::path(saved.payload_path).filename().string()},
        {"encoding", "float64-le-colmajor"},
        {"rows", inst.d()},
        {"cols", inst.T()},
        {"fnv1a64", hex64(saved.payload_hash)}}}};
  std::ofstream out(saved.header_path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + saved.header_path);
  out << header.dump(2) << "\n";
  return saved;
}

Instance load_instance(const std::string& header_path) {
  namespace fs = std::filesystem;
  std::ifstream in(header_path);
  if (!in) throw FormatError("cannot read " + header_path);
  nlohmann::json header;
  try {
    in >> header;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed instance header: " + std::string(e.what()));
  }
  if (header.value("format", "") != "hardchain-instance")
    throw FormatError("not a hardchain instance header");
  if (header.at("format_version").get<int>() != kInstanceFormatVersion)
    throw FormatError("unsupported instance format version");

  const auto& pl = header.at("payload");
  const fs::path payload = fs::path(header_path).parent_path() / pl.at("file").get<std::string>();
  std::ifstream bin(payload, std::ios::binary);
  if (!bin) throw FormatError("cannot read payload " + payload.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (hex64(fnv1a(bytes.data(), bytes.size())) != pl.at("fnv1a64").get<std::string>())
    throw FormatError("payload hash mismatch for " + payload.string());

  InstanceParams params = params_from_json(header.at("params"));
  const long d = header.at("d").get<long>();
  const int T = header.at("T").get<int>();
  const bool identity = header.value("identity", false);
  const int p_max = header.at("p_max").get<int>();
  const int block_dim = header.at("block_dim").get<int>();

  auto emb = std::make_shared<RotationEmbedding>();
  emb->d = d;
  emb->T = T;
  emb->seed = header.at("seed").get<std::uint64_t>();
  emb->U = decode_le(bytes, d, T);
  if (identity) {
    emb->block_dim = block_dim;
    emb->blocks = MatrixXd::Identity(d, d).rightCols(d - T);
  } else {
    attach_blocks(*emb, block_dim);
  }
  return Instance(std::move(params), std::move(emb),
                  header.at("taint").get<std::vector<std::string>>(), p_max, identity);
}

}  // namespace hardchain
