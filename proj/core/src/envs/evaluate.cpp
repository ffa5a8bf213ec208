#include "habi/envs/evaluate.hpp"

#include <cmath>
#include <exception>
#include <set>
#include <thread>

#include "habi/errors.hpp"
#include "habi/rng.hpp"

namespace habi::envs {

namespace {

class FnController final : public Controller {
 public:
  explicit FnController(const ActFn& fn) : fn_(fn) {}
  void begin_episode(std::uint64_t seed) override { rng_.seed(seed); }
  Vector<double> act(const Vector<double>& state) override { return fn_(state, rng_); }

 private:
  const ActFn& fn_;
  std::mt19937_64 rng_;
};

struct EpisodeResult {
  double ret = 0.0;
  int length = 0;
  bool success = false;
};

}  // namespace

std::vector<std::uint64_t> episode_seeds(std::uint64_t base, int n) {
  std::vector<std::uint64_t> out;
  std::set<std::uint64_t> seen;
  for (std::uint64_t k = 0; static_cast<int>(out.size()) < n; ++k) {
    const auto s = derive_seed(base, 0xe7a1, k);
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

EvalReport evaluate_controller(const Env& env, const ControllerFactory& make,
                               const std::vector<std::uint64_t>& seeds,
                               const std::optional<ScoreAnchors>& anchors, int threads,
                               StartMode start) {
  if (seeds.empty()) throw UsageError("evaluate_policy: need at least one episode seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw UsageError("evaluate_policy: episode seeds must be distinct");
  }
  if (threads < 1) throw UsageError("evaluate_policy: threads must be >= 1");
  if (anchors && anchors->expert_return == anchors->random_return) {
    throw UsageError("evaluate_policy: anchors coincide");
  }
  const int n = static_cast<int>(seeds.size());
  std::vector<EpisodeResult> results(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));

  auto worker = [&](int first, int stride) {
    auto sim = env.clone();
    auto ctl = make();
    for (int ep = first; ep < n; ep += stride) {
      const auto seed = seeds[static_cast<std::size_t>(ep)];
      try {
        Vector<double> state = sim->reset(derive_seed(seed, 1), start);
        ctl->begin_episode(derive_seed(seed, 2));
        EpisodeResult r;
        double discount = 1.0;
        for (;;) {
          const auto res = sim->step(ctl->act(state));
          r.ret += discount * res.reward;
          discount *= sim->gamma();
          ++r.length;
          state = res.next_state;
          if (res.done) {
            r.success = res.reward > 0.0;
            break;
          }
        }
        results[static_cast<std::size_t>(ep)] = r;
      } catch (...) {
        errors[static_cast<std::size_t>(ep)] = std::current_exception();
      }
    }
  };
  const int workers = std::min(threads, n);
  if (workers == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker, w, workers);
    for (auto& t : pool) t.join();
  }
  for (int ep = 0; ep < n; ++ep) {
    if (!errors[static_cast<std::size_t>(ep)]) continue;
    try {
      std::rethrow_exception(errors[static_cast<std::size_t>(ep)]);
    } catch (const std::exception& e) {
      throw EvaluationError(ep, e.what());
    } catch (...) {
      throw EvaluationError(ep, "unknown failure");
    }
  }

  EvalReport rep;
  rep.episodes = n;
  rep.seeds = seeds;
  double sum = 0.0, len = 0.0, wins = 0.0;
  for (const auto& r : results) {
    rep.returns.push_back(r.ret);
    sum += r.ret;
    len += r.length;
    wins += r.success ? 1.0 : 0.0;
  }
  rep.mean_return = sum / n;
  rep.mean_length = len / n;
  rep.success_rate = wins / n;
  double ss = 0.0;
  for (double r : rep.returns) ss += (r - rep.mean_return) * (r - rep.mean_return);
  rep.stderr_return = n > 1 ? std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n)) : 0.0;
  if (anchors) {
    rep.normalized_score = anchors->normalize(rep.mean_return);
    rep.normalized_stderr =
        100.0 * rep.stderr_return / std::abs(anchors->expert_return - anchors->random_return);
  }
  return rep;
}

EvalReport evaluate_policy(const Env& env, const ActFn& act, const std::vector<std::uint64_t>& seeds,
                           const std::optional<ScoreAnchors>& anchors, int threads,
                           StartMode start) {
  return evaluate_controller(
      env, [&act] { return std::make_unique<FnController>(act); }, seeds, anchors, threads, start);
}

ActFn random_policy(int action_dim) {
  return [action_dim](const Vector<double>&, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector<double> a(action_dim);
    for (int k = 0; k < action_dim; ++k) a(k) = u(rng);
    return a;
  };
}

ScoreAnchors measure_anchors(const Env& env, int n_episodes, std::uint64_t seed, int threads,
                             StartMode start) {
  const auto seeds = episode_seeds(derive_seed(seed, 0xa7c4), n_episodes);
  ScoreAnchors out;
  out.expert_return =
      evaluate_controller(env, [&env] { return env.make_expert(); }, seeds, std::nullopt, threads,
                          start)
          .mean_return;
  out.random_return =
      evaluate_policy(env, random_policy(env.action_dim()), seeds, std::nullopt, threads, start)
          .mean_return;
  if (out.expert_return <= out.random_return) {
    throw NumericalError("measure_anchors: expert does not outperform random on " + env.name());
  }
  return out;
}

std::vector<ActionSample> dump_action_distribution(const std::vector<NamedPolicy>& policies,
                                                   const std::vector<Vector<double>>& states,
                                                   int n_samples, std::uint64_t seed) {
  std::vector<ActionSample> rows;
  for (std::size_t p = 0; p < policies.size(); ++p) {
    for (std::size_t s = 0; s < states.size(); ++s) {
      for (int k = 0; k < n_samples; ++k) {
        std::mt19937_64 rng(derive_seed(seed, p * 1000003u + s, static_cast<std::uint64_t>(k)));
        rows.push_back({policies[p].name, static_cast<int>(s), k, policies[p].act(states[s], rng)});
      }
    }
  }
  return rows;
}

std::string action_samples_csv(const std::vector<ActionSample>& rows, int action_dim) {
  std::string out = "policy,state_id,sample_id";
  for (int k = 0; k < action_dim; ++k) out += ",a" + std::to_string(k);
  out += "\n";
  char buf[32];
  for (const auto& r : rows) {
    out += r.policy + "," + std::to_string(r.state_id) + "," + std::to_string(r.sample_id);
    for (Index k = 0; k < r.action.size(); ++k) {
      std::snprintf(buf, sizeof(buf), ",%.9g", r.action(k));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace habi::envs
