#include "nfvs/ddpg.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace nfvs::ddpg {

namespace {

std::vector<int> arch(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

void AgentConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (!(actor_lr > 0.0 && critic_lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (sigma0 < 0.0 || sigma_decay <= 0.0 || sigma_decay > 1.0)
    throw std::invalid_argument("bad exploration noise settings");
}

Eigen::VectorXd policy_action(const nn::MlpD& actor, const Eigen::VectorXd& state, double sigma,
                              std::mt19937_64& rng) {
  Eigen::VectorXd a = nn::forward(actor, state);
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = std::clamp(a[i] + noise(rng), -1.0, 1.0);
  }
  return a;
}

Eigen::MatrixXd critic_action_gradient(const nn::MlpD& critic, const Eigen::MatrixXd& states,
                                       const Eigen::MatrixXd& actions) {
  const Eigen::MatrixXd input = stack(states, actions);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, input.cols());
  const auto g = nn::backward(critic, input, ones);
  return g.input.bottomRows(actions.rows());
}

Agent::Agent(int state_dim, int action_dim, AgentConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), rng_(seed), sigma_(cfg_.sigma0) {
  cfg_.validate();
  actor_ = nn::MlpD::random(arch(state_dim, cfg_.hidden, action_dim), nn::OutputActivation::Tanh, rng_);
  critic_ = nn::MlpD::random(arch(state_dim + action_dim, cfg_.hidden, 1), nn::OutputActivation::Identity, rng_);
  target_actor_ = actor_;
  target_critic_ = critic_;
  actor_opt_ = nn::AdamState<double>(actor_.num_params(), cfg_.actor_lr);
  critic_opt_ = nn::AdamState<double>(critic_.num_params(), cfg_.critic_lr);
}

Agent::Agent(nn::MlpD actor, nn::MlpD critic, nn::MlpD target_actor, nn::MlpD target_critic,
             AgentConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      actor_(std::move(actor)),
      critic_(std::move(critic)),
      target_actor_(std::move(target_actor)),
      target_critic_(std::move(target_critic)),
      rng_(seed),
      sigma_(cfg_.sigma0) {
  cfg_.validate();
  if (!actor_.same_architecture(target_actor_) || !critic_.same_architecture(target_critic_))
    throw std::invalid_argument("target networks must match the online networks");
  if (critic_.input_size() != actor_.input_size() + actor_.output_size() || critic_.output_size() != 1)
    throw std::invalid_argument("critic input must be state + action with a scalar output");
  actor_opt_ = nn::AdamState<double>(actor_.num_params(), cfg_.actor_lr);
  critic_opt_ = nn::AdamState<double>(critic_.num_params(), cfg_.critic_lr);
}

void Agent::set_learning_rates(double actor_lr, double critic_lr) {
  cfg_.actor_lr = actor_lr;
  cfg_.critic_lr = critic_lr;
  actor_opt_.learning_rate = actor_lr;
  critic_opt_.learning_rate = critic_lr;
}

Eigen::VectorXd Agent::select_action(const Eigen::VectorXd& state, bool explore) {
  if (state.size() != state_dim()) throw std::invalid_argument("state dimension mismatch");
  return policy_action(actor_, state, explore ? sigma_ : 0.0, rng_);
}

Eigen::VectorXd Agent::critic_targets(const Minibatch& batch) const {
  const Eigen::MatrixXd next_actions = nn::forward(target_actor_, batch.next_states);
  const Eigen::MatrixXd q_next = nn::forward(target_critic_, stack(batch.next_states, next_actions));
  Eigen::VectorXd bootstrap = q_next.row(0).transpose();
  bootstrap.array() *= (1.0 - batch.terminal.array());
  return batch.rewards + cfg_.gamma * bootstrap;
}

TrainResult Agent::train_step(const Minibatch& batch) {
  const auto n = batch.size();
  if (n == 0) throw std::invalid_argument("empty minibatch");
  if (batch.states.rows() != state_dim() || batch.actions.rows() != action_dim())
    throw std::invalid_argument("minibatch dimensions do not match the agent");

  TrainResult result;
  const Eigen::VectorXd y = critic_targets(batch);

  nn::ForwardCache<double> cache;
  const Eigen::MatrixXd q = nn::forward(critic_, stack(batch.states, batch.actions), &cache);
  const Eigen::VectorXd td = y - q.row(0).transpose();
  result.critic_loss = (batch.weights.array() * td.array().square()).sum() / static_cast<double>(n);
  result.td_errors = td.cwiseAbs();

  const Eigen::MatrixXd dloss_dq = (-2.0 / static_cast<double>(n)) * (batch.weights.array() * td.array()).matrix().transpose();
  const Eigen::VectorXd critic_grad = nn::backward(critic_, cache, dloss_dq).params;

  const Eigen::VectorXd actor_grad = policy_gradient(
      actor_, batch.states,
      [this](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) { return critic_action_gradient(critic_, s, a); });

  if (!std::isfinite(result.critic_loss) || !critic_grad.allFinite() || !actor_grad.allFinite()) {
    result.aborted = true;
    return result;
  }

  nn::apply_update(critic_, critic_opt_, critic_grad);
  nn::apply_update(actor_, actor_opt_, (-actor_grad).eval());
  nn::soft_update(target_critic_, critic_, cfg_.tau);
  nn::soft_update(target_actor_, actor_, cfg_.tau);
  ++train_steps_;
  return result;
}

void Agent::end_episode() { sigma_ = std::max(cfg_.sigma_min, sigma_ * cfg_.sigma_decay); }

void Agent::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nn::save_file(dir / "actor.bin", actor_);
  nn::save_file(dir / "critic.bin", critic_);
  nn::save_file(dir / "target_actor.bin", target_actor_);
  nn::save_file(dir / "target_critic.bin", target_critic_);

  nlohmann::json m;
  m["version"] = kCheckpointVersion;
  m["state_dim"] = state_dim();
  m["action_dim"] = action_dim();
  m["hidden"] = cfg_.hidden;
  m["actor_lr"] = cfg_.actor_lr;
  m["critic_lr"] = cfg_.critic_lr;
  m["gamma"] = cfg_.gamma;
  m["tau"] = cfg_.tau;
  m["sigma0"] = cfg_.sigma0;
  m["sigma_decay"] = cfg_.sigma_decay;
  m["sigma_min"] = cfg_.sigma_min;
  m["sigma"] = sigma_;
  m["train_steps"] = train_steps_;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw std::runtime_error("cannot write checkpoint manifest");
  os << m.dump(2) << '\n';
}

Agent Agent::load_checkpoint(const std::filesystem::path& dir, std::uint64_t seed) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("checkpoint manifest missing in " + dir.string());
  const auto m = nlohmann::json::parse(is);
  if (m.at("version").get<int>() != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");

  AgentConfig cfg;
  cfg.hidden = m.at("hidden").get<std::vector<int>>();
  cfg.actor_lr = m.at("actor_lr").get<double>();
  cfg.critic_lr = m.at("critic_lr").get<double>();
  cfg.gamma = m.at("gamma").get<double>();
  cfg.tau = m.at("tau").get<double>();
  cfg.sigma0 = m.at("sigma0").get<double>();
  cfg.sigma_decay = m.at("sigma_decay").get<double>();
  cfg.sigma_min = m.at("sigma_min").get<double>();

  Agent agent(nn::load_file<double>(dir / "actor.bin"), nn::load_file<double>(dir / "critic.bin"),
              nn::load_file<double>(dir / "target_actor.bin"), nn::load_file<double>(dir / "target_critic.bin"),
              cfg, seed);
  if (agent.state_dim() != m.at("state_dim").get<int>() || agent.action_dim() != m.at("action_dim").get<int>())
    throw std::runtime_error("checkpoint manifest disagrees with parameter files");
  agent.sigma_ = m.at("sigma").get<double>();
  agent.train_steps_ = m.at("train_steps").get<std::int64_t>();
  return agent;
}

}  // namespace nfvs::ddpg
