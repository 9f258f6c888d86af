#pragma once

// Plain fixed-budget adversarial training written directly against the
// primitives: shuffled batches, PGD at eps (eps/2 during warm-up), mean
// cross-entropy on the adversarial batch, momentum SGD with weight decay.

#include <cmath>
#include <vector>

#include "wpb/attacks.hpp"
#include "wpb/data.hpp"
#include "wpb/functional.hpp"
#include "wpb/models.hpp"
#include "wpb/rng.hpp"
#include "wpb/training.hpp"

namespace wpb::testing {

struct ReferenceEpoch {
  Parameters params;
  double nat_loss = 0.0;
  double adv_loss = 0.0;
  double nat_acc = 0.0;
  double rob_acc = 0.0;
};

inline std::vector<ReferenceEpoch> reference_standard_at(const MlpSpec& spec, const Dataset& data, int epochs,
                                                         int warmup, double eps, int steps, double lr0,
                                                         double momentum, double wd, std::size_t batch_size,
                                                         std::uint64_t seed) {
  Parameters params = init_parameters(spec, seed);
  std::vector<Tensor> velocity;
  for (const auto& e : params.entries) velocity.emplace_back(e.value.shape(), 0.0);
  std::vector<ReferenceEpoch> out;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const double budget = epoch <= warmup ? eps / 2.0 : eps;
    double nat = 0.0, adv = 0.0;
    std::size_t nat_ok = 0, adv_ok = 0;
    const auto batches = shuffle_batches(data.size(), batch_size, seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Tensor x = data.features.gather_rows(batches[b]);
      std::vector<int> y;
      for (std::size_t i : batches[b]) y.push_back(data.labels[i]);

      AttackConfig attack;
      attack.epsilons = {budget};
      attack.step_sizes = {budget / 4.0};
      attack.steps = steps;
      attack.init_noise_std = 0.001;
      attack.seed =
          CounterRng::derive(seed, {0xA77Cu, static_cast<std::uint64_t>(epoch), b}).next_u64();
      const Tensor x_adv = pgd_linf(params, x, y, attack).x_adv;

      const auto score = [&](const Tensor& input, double& loss_sum, std::size_t& correct) {
        Tape t;
        const Var z = forward_logits(t, params, t.leaf(input));
        const Tensor ce = t.value(cross_entropy_rows(t, z, y));
        double batch_sum = 0.0;
        for (double v : ce.data()) batch_sum += v;
        loss_sum += batch_sum;
        const auto pred = argmax_rows(t.value(z));
        for (std::size_t r = 0; r < y.size(); ++r) correct += pred[r] == y[r];
      };
      score(x, nat, nat_ok);
      score(x_adv, adv, adv_ok);

      Tape tape;
      const auto vars = record_parameters(tape, params);
      const Var logits = forward_logits(tape, vars, tape.leaf(x_adv));
      const Var loss = tape.scale(tape.sum(cross_entropy_rows(tape, logits, y)), 1.0 / static_cast<double>(y.size()));
      const auto grads = tape.backward(loss, vars);
      for (std::size_t p = 0; p < params.entries.size(); ++p) {
        Tensor& theta = params.entries[p].value;
        for (std::size_t i = 0; i < theta.size(); ++i) {
          velocity[p][i] = momentum * velocity[p][i] + (grads[p][i] + wd * theta[i]);
          theta[i] -= lr0 * velocity[p][i];
        }
      }
    }
    const double n = static_cast<double>(data.size());
    out.push_back({params, nat / n, adv / n, nat_ok / n, adv_ok / n});
  }
  return out;
}

}  // namespace wpb::testing
