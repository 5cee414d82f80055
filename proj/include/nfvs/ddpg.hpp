#pragma once

#include <cstdint>
#include <filesystem>
#include <random>

#include <Eigen/Dense>

#include "nfvs/nn.hpp"
#include "nfvs/replay.hpp"

namespace nfvs::ddpg {

struct AgentConfig {
  std::vector<int> hidden = {64, 64};
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double gamma = 0.99;
  double tau = 0.005;
  double sigma0 = 0.3;        // initial exploration noise
  double sigma_decay = 0.999; // multiplicative, per episode
  double sigma_min = 0.0;

  void validate() const;
};

struct TrainResult {
  double critic_loss = 0.0;
  Eigen::VectorXd td_errors;  // |y_i - Q(x_i, a_i)| per sample
  bool aborted = false;       // non-finite loss or gradient; nothing was updated
};

/// mu(x) + N(0, sigma^2), clamped to [-1, 1]. sigma <= 0 gives mu(x).
Eigen::VectorXd policy_action(const nn::MlpD& actor, const Eigen::VectorXd& state, double sigma,
                              std::mt19937_64& rng);

/// dQ/da for each column of (states, actions), given a critic over [state; action].
Eigen::MatrixXd critic_action_gradient(const nn::MlpD& critic, const Eigen::MatrixXd& states,
                                       const Eigen::MatrixXd& actions);

/// Ascent direction dJ/dtheta for J = mean_i Q(x_i, mu(x_i)).
/// `action_grad(states, actions)` returns dQ/da column-wise.
template <class ActionGrad>
Eigen::VectorXd policy_gradient(const nn::MlpD& actor, const Eigen::MatrixXd& states,
                                ActionGrad&& action_grad) {
  nn::ForwardCache<double> cache;
  const Eigen::MatrixXd actions = nn::forward(actor, states, &cache);
  const Eigen::MatrixXd dq_da = action_grad(states, actions);
  return nn::backward(actor, cache, dq_da / static_cast<double>(states.cols())).params;
}

/// Actor-critic learner with target networks.
class Agent {
 public:
  Agent(int state_dim, int action_dim, AgentConfig cfg, std::uint64_t seed);
  Agent(nn::MlpD actor, nn::MlpD critic, nn::MlpD target_actor, nn::MlpD target_critic,
        AgentConfig cfg, std::uint64_t seed);

  int state_dim() const { return actor_.input_size(); }
  int action_dim() const { return actor_.output_size(); }
  const AgentConfig& config() const { return cfg_; }

  Eigen::VectorXd select_action(const Eigen::VectorXd& state, bool explore);

  /// y_i = r_i + gamma * Q'(x_{i+1}, mu'(x_{i+1})), bootstrap masked on terminal rows.
  Eigen::VectorXd critic_targets(const Minibatch& batch) const;

  /// Critic regression on importance-weighted squared TD error, deterministic
  /// policy-gradient actor step, then soft target updates.
  TrainResult train_step(const Minibatch& batch);

  /// Multiplicative exploration decay.
  void end_episode();
  double sigma() const { return sigma_; }
  void set_sigma(double s) { sigma_ = s; }
  std::int64_t train_steps() const { return train_steps_; }

  const nn::MlpD& actor() const { return actor_; }
  const nn::MlpD& critic() const { return critic_; }
  const nn::MlpD& target_actor() const { return target_actor_; }
  const nn::MlpD& target_critic() const { return target_critic_; }
  nn::MlpD& mutable_actor() { return actor_; }
  nn::MlpD& mutable_critic() { return critic_; }

  void set_learning_rates(double actor_lr, double critic_lr);

  /// Writes actor/critic/target files plus manifest.json into `dir`.
  void save_checkpoint(const std::filesystem::path& dir) const;
  static Agent load_checkpoint(const std::filesystem::path& dir, std::uint64_t seed = 0);

 private:
  AgentConfig cfg_;
  nn::MlpD actor_, critic_, target_actor_, target_critic_;
  nn::AdamState<double> actor_opt_, critic_opt_;
  std::mt19937_64 rng_;
  double sigma_;
  std::int64_t train_steps_ = 0;
};

}  // namespace nfvs::ddpg
