#include "coxq/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "coxq/learner.hpp"
#include "coxq/metrics.hpp"

namespace coxq {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'X', 'Q', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto len = read_pod<std::uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void Checkpoint::put(const std::string& name, const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.values.assign(m.data(), m.data() + m.size());  // column-major storage order
  tensors_[name] = std::move(t);
}

void Checkpoint::put(const std::string& name, const Eigen::VectorXd& v) {
  Tensor t;
  t.shape = {static_cast<std::uint64_t>(v.size())};
  t.values.assign(v.data(), v.data() + v.size());
  tensors_[name] = std::move(t);
}

void Checkpoint::put_scalar(const std::string& name, double v) {
  tensors_[name] = Tensor{{}, {v}};
}

void Checkpoint::put_blob(const std::string& name, std::string bytes) {
  blobs_[name] = std::move(bytes);
}

bool Checkpoint::has(const std::string& name) const {
  return tensors_.count(name) != 0 || blobs_.count(name) != 0;
}

Eigen::MatrixXd Checkpoint::get_matrix(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end() || it->second.shape.size() != 2)
    throw std::runtime_error("checkpoint: missing matrix tensor " + name);
  const auto& t = it->second;
  Eigen::MatrixXd m(t.shape[0], t.shape[1]);
  std::memcpy(m.data(), t.values.data(), t.values.size() * sizeof(double));
  return m;
}

Eigen::VectorXd Checkpoint::get_vector(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end() || it->second.shape.size() != 1)
    throw std::runtime_error("checkpoint: missing vector tensor " + name);
  return Eigen::Map<const Eigen::VectorXd>(it->second.values.data(),
                                           static_cast<Eigen::Index>(it->second.values.size()));
}

double Checkpoint::get_scalar(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end() || it->second.values.size() != 1)
    throw std::runtime_error("checkpoint: missing scalar tensor " + name);
  return it->second.values[0];
}

const std::string& Checkpoint::get_blob(const std::string& name) const {
  auto it = blobs_.find(name);
  if (it == blobs_.end()) throw std::runtime_error("checkpoint: missing blob " + name);
  return it->second;
}

void Checkpoint::save(const std::string& path) const {
  std::ostringstream os(std::ios::binary);
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint64_t>(os, tensors_.size());
  for (const auto& [name, t] : tensors_) {
    write_string(os, name);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) write_pod<std::uint64_t>(os, d);
    write_pod<std::uint64_t>(os, t.values.size());
    os.write(reinterpret_cast<const char*>(t.values.data()),
             static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  write_pod<std::uint64_t>(os, blobs_.size());
  for (const auto& [name, bytes] : blobs_) {
    write_string(os, name);
    write_pod<std::uint64_t>(os, bytes.size());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  atomic_write(path, os.str());
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  Checkpoint ck;
  const auto n_tensors = read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    const std::string name = read_string(is);
    Tensor t;
    const auto ndim = read_pod<std::uint32_t>(is);
    t.shape.resize(ndim);
    for (auto& d : t.shape) d = read_pod<std::uint64_t>(is);
    const auto count = read_pod<std::uint64_t>(is);
    t.values.resize(count);
    is.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
    ck.tensors_[name] = std::move(t);
  }
  const auto n_blobs = read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_blobs; ++i) {
    const std::string name = read_string(is);
    const auto size = read_pod<std::uint64_t>(is);
    std::string bytes(size, '\0');
    is.read(bytes.data(), static_cast<std::streamsize>(size));
    if (!is) throw std::runtime_error("checkpoint: truncated blob " + name);
    ck.blobs_[name] = std::move(bytes);
  }
  return ck;
}

namespace {

void pack_net(Checkpoint& ck, const std::string& prefix, const DenseNet& net) {
  const auto& layers = net.layers();
  ck.put_scalar(prefix + ".layers", static_cast<double>(layers.size()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    ck.put(prefix + ".W" + std::to_string(l), layers[l].W);
    ck.put(prefix + ".b" + std::to_string(l), layers[l].b);
  }
}

void unpack_net(const Checkpoint& ck, const std::string& prefix, DenseNet& net) {
  auto& layers = net.layers();
  if (static_cast<std::size_t>(ck.get_scalar(prefix + ".layers")) != layers.size())
    throw std::runtime_error("checkpoint: layer count mismatch at " + prefix);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd W = ck.get_matrix(prefix + ".W" + std::to_string(l));
    Eigen::VectorXd b = ck.get_vector(prefix + ".b" + std::to_string(l));
    if (W.rows() != layers[l].W.rows() || W.cols() != layers[l].W.cols() ||
        b.size() != layers[l].b.size())
      throw std::runtime_error("checkpoint: shape mismatch at " + prefix + " layer " +
                               std::to_string(l) + " (expected " +
                               std::to_string(layers[l].W.rows()) + "x" +
                               std::to_string(layers[l].W.cols()) + ")");
    layers[l].W = std::move(W);
    layers[l].b = std::move(b);
  }
}

void pack_adam(Checkpoint& ck, const std::string& prefix, Adam& opt) {
  ck.put_scalar(prefix + ".t", static_cast<double>(opt.t()));
  ck.put_scalar(prefix + ".skipped", static_cast<double>(opt.skipped()));
  for (std::size_t l = 0; l < opt.m().dW.size(); ++l) {
    ck.put(prefix + ".mW" + std::to_string(l), opt.m().dW[l]);
    ck.put(prefix + ".mb" + std::to_string(l), opt.m().db[l]);
    ck.put(prefix + ".vW" + std::to_string(l), opt.v().dW[l]);
    ck.put(prefix + ".vb" + std::to_string(l), opt.v().db[l]);
  }
}

void unpack_adam(const Checkpoint& ck, const std::string& prefix, Adam& opt) {
  opt.t() = static_cast<std::int64_t>(ck.get_scalar(prefix + ".t"));
  opt.skipped_counter() = static_cast<std::int64_t>(ck.get_scalar(prefix + ".skipped"));
  for (std::size_t l = 0; l < opt.m().dW.size(); ++l) {
    opt.m().dW[l] = ck.get_matrix(prefix + ".mW" + std::to_string(l));
    opt.m().db[l] = ck.get_vector(prefix + ".mb" + std::to_string(l));
    opt.v().dW[l] = ck.get_matrix(prefix + ".vW" + std::to_string(l));
    opt.v().db[l] = ck.get_vector(prefix + ".vb" + std::to_string(l));
  }
}

}  // namespace

void pack_agent(Checkpoint& ck, const Agent& agent) {
  Agent& a = const_cast<Agent&>(agent);  // optimizer accessors are non-const
  pack_net(ck, "policy", a.policy.net());
  pack_adam(ck, "policy_opt", a.policy_opt);
  for (int c = 0; c < a.reward_critics.critics(); ++c) {
    const std::string i = std::to_string(c);
    pack_net(ck, "reward_critic" + i, a.reward_critics.nets()[c]);
    pack_net(ck, "cost_critic" + i, a.cost_critics.nets()[c]);
    pack_net(ck, "target_reward" + i, a.targets.reward[c]);
    pack_net(ck, "target_cost" + i, a.targets.cost[c]);
    pack_adam(ck, "reward_opt" + i, a.reward_opts[c]);
    pack_adam(ck, "cost_opt" + i, a.cost_opts[c]);
  }
  ck.put_scalar("lagrangian.lambda", a.lagrangian.lambda);
  ck.put_scalar("lagrangian.lr", a.lagrangian.lr_lambda);
  ck.put_scalar("lagrangian.alm_c", a.lagrangian.alm_c);
  ck.put_scalar("lagrangian.d_q", a.lagrangian.d_q);
  ck.put_scalar("lagrangian.d_episode", a.lagrangian.d_episode);
  ck.put_scalar("temperature.log_alpha", a.temperature.log_alpha);
  ck.put_scalar("temperature.target_entropy", a.temperature.target_entropy);
  ck.put_scalar("temperature.m", a.temperature.opt.m_);
  ck.put_scalar("temperature.v", a.temperature.opt.v_);
  ck.put_scalar("temperature.t", static_cast<double>(a.temperature.opt.t_));
  ck.put_scalar("targets.tau", a.targets.tau);
}

void unpack_agent(const Checkpoint& ck, Agent& agent) {
  unpack_net(ck, "policy", agent.policy.net());
  unpack_adam(ck, "policy_opt", agent.policy_opt);
  for (int c = 0; c < agent.reward_critics.critics(); ++c) {
    const std::string i = std::to_string(c);
    unpack_net(ck, "reward_critic" + i, agent.reward_critics.nets()[c]);
    unpack_net(ck, "cost_critic" + i, agent.cost_critics.nets()[c]);
    unpack_net(ck, "target_reward" + i, agent.targets.reward[c]);
    unpack_net(ck, "target_cost" + i, agent.targets.cost[c]);
    unpack_adam(ck, "reward_opt" + i, agent.reward_opts[c]);
    unpack_adam(ck, "cost_opt" + i, agent.cost_opts[c]);
  }
  agent.lagrangian.lambda = ck.get_scalar("lagrangian.lambda");
  agent.lagrangian.lr_lambda = ck.get_scalar("lagrangian.lr");
  agent.lagrangian.alm_c = ck.get_scalar("lagrangian.alm_c");
  agent.lagrangian.d_q = ck.get_scalar("lagrangian.d_q");
  agent.lagrangian.d_episode = ck.get_scalar("lagrangian.d_episode");
  agent.temperature.log_alpha = ck.get_scalar("temperature.log_alpha");
  agent.temperature.target_entropy = ck.get_scalar("temperature.target_entropy");
  agent.temperature.opt.m_ = ck.get_scalar("temperature.m");
  agent.temperature.opt.v_ = ck.get_scalar("temperature.v");
  agent.temperature.opt.t_ = static_cast<std::int64_t>(ck.get_scalar("temperature.t"));
  agent.targets.tau = ck.get_scalar("targets.tau");
}

}  // namespace coxq
