#include "ecotune/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include <json.hpp>

#include "ecotune/random.hpp"

namespace ecotune {

std::string ValidityRegistry::key_of(const Configuration& x) {
  nlohmann::json key = nlohmann::json::array();
  key.push_back(x.model);
  key.push_back(x.prompt);
  key.push_back(x.stop);
  return key.dump();
}

std::int64_t ValidityRegistry::max_valid_n(const Configuration& x) const {
  std::int64_t best = 1;
  const auto it = groups_.find(key_of(x));
  if (it == groups_.end()) return best;
  for (const auto& e : it->second.valid)
    if (e.max_tokens >= x.max_tokens) best = std::max(best, e.n);
  return best;
}

std::optional<std::int64_t> ValidityRegistry::min_invalid_n(
    const Configuration& x) const {
  std::optional<std::int64_t> best;
  const auto it = groups_.find(key_of(x));
  if (it == groups_.end()) return best;
  for (const auto& e : it->second.invalid)
    if (e.max_tokens <= x.max_tokens && (!best || e.n < *best)) best = e.n;
  return best;
}

void ValidityRegistry::record_valid(const Configuration& x, std::int64_t n) {
  groups_[key_of(x)].valid.push_back({n, x.max_tokens});
}

void ValidityRegistry::record_invalid(const Configuration& x, std::int64_t n) {
  groups_[key_of(x)].invalid.push_back({n, x.max_tokens});
}

const std::vector<ValidityRegistry::Entry>& ValidityRegistry::valid_entries(
    const std::string& key) const {
  static const std::vector<Entry> empty;
  const auto it = groups_.find(key);
  return it == groups_.end() ? empty : it->second.valid;
}

const std::vector<ValidityRegistry::Entry>& ValidityRegistry::invalid_entries(
    const std::string& key) const {
  static const std::vector<Entry> empty;
  const auto it = groups_.find(key);
  return it == groups_.end() ? empty : it->second.invalid;
}

double rho(std::int64_t k, std::int64_t d) {
  if (k < 1 || k > d)
    throw std::invalid_argument("rho requires 1 <= k <= |D|");
  const double kd = static_cast<double>(k);
  const double dd = static_cast<double>(d);
  if (2 * k > d) return (1.0 - kd / dd) * (1.0 + 1.0 / kd);
  return 1.0 - (kd - 1.0) / dd;
}

PreCheckResult pre_check(const Configuration& x, const ValidityRegistry& reg) {
  const std::int64_t target = x.response_count();
  const std::int64_t max_valid = reg.max_valid_n(x);
  if (target <= max_valid) return {false, target};
  const auto min_invalid = reg.min_invalid_n(x);
  if (min_invalid && target >= *min_invalid) return {true, 0};
  return {false, max_valid};
}

namespace {

// Per-example trial state: every response fetched so far and every token
// charged for it, across all rounds of the trial.
struct ExampleSlot {
  std::string rendered_prompt;
  std::vector<ScoredResponse> responses;
  std::int64_t fetched = 0;  // responses (or best_of candidates) obtained
  std::int64_t tokens = 0;   // input+output tokens charged to this example
};

class TrialRunner {
 public:
  TrialRunner(const Configuration& x, const TuningSet& data,
              const EvaluationSettings& settings, CompletionBackend& backend)
      : config_(x), data_(data), settings_(settings), backend_(backend) {
    if (data.empty()) throw std::invalid_argument("tuning set is empty");
    slots_.resize(data.size());
    order_.resize(data.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (settings.shuffle) {
      Rng rng = make_rng(settings.shuffle_seed, 0x7452494d4f524452ull);
      for (std::size_t i = order_.size(); i > 1; --i)
        std::swap(order_[i - 1],
                  order_[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
    }
  }

  // Grows example `order_[pos]`'s response window to `target` responses.
  void fetch(std::size_t pos, std::int64_t target) {
    ExampleSlot& slot = slot_at(pos);
    if (slot.fetched >= target) return;
    CompletionRequest request = base_request(pos);
    const std::int64_t count = target - slot.fetched;
    if (config_.best_of > 1) {
      request.best_of = count;
      request.n = 1;
    } else {
      request.n = count;
      request.best_of = 1;
    }
    request.response_offset = slot.fetched;
    ResponseSet rs;
    try {
      rs = backend_.complete(request);
    } catch (const BackendError& e) {
      throw TrialAbort(e.what(), total_tokens_);
    }
    apply(slot, request, std::move(rs));
  }

  // Fetches a batch of examples, possibly concurrently.
  void fetch_batch(std::int64_t from, std::int64_t to, std::int64_t target) {
    if (settings_.parallelism <= 1 || to - from <= 1) {
      for (std::int64_t i = from; i < to; ++i)
        fetch(static_cast<std::size_t>(i), target);
      return;
    }
    std::int64_t next = from;
    while (next < to) {
      const std::int64_t wave_end =
          std::min(to, next + settings_.parallelism);
      struct Outcome {
        std::size_t pos;
        CompletionRequest request;
        ResponseSet response;
        std::optional<std::string> error;
      };
      std::vector<std::future<Outcome>> wave;
      for (std::int64_t i = next; i < wave_end; ++i) {
        const auto pos = static_cast<std::size_t>(i);
        ExampleSlot& slot = slot_at(pos);
        if (slot.fetched >= target) continue;
        CompletionRequest request = base_request(pos);
        const std::int64_t count = target - slot.fetched;
        if (config_.best_of > 1) {
          request.best_of = count;
          request.n = 1;
        } else {
          request.n = count;
          request.best_of = 1;
        }
        request.response_offset = slot.fetched;
        wave.push_back(std::async(std::launch::async, [this, pos, request] {
          Outcome out{pos, request, {}, std::nullopt};
          try {
            out.response = backend_.complete(request);
          } catch (const BackendError& e) {
            out.error = e.what();
          }
          return out;
        }));
      }
      std::optional<std::string> first_error;
      for (auto& f : wave) {
        Outcome out = f.get();
        if (out.error) {
          if (!first_error) first_error = out.error;
          continue;
        }
        apply(slot_at(out.pos), out.request, std::move(out.response));
      }
      if (first_error) throw TrialAbort(*first_error, total_tokens_);
      next = wave_end;
    }
  }

  // Mean per-example cost over the first k examples of the trial order.
  double prefix_cost(std::int64_t k) const {
    std::int64_t sum = 0;
    for (std::int64_t i = 0; i < k; ++i)
      sum += slots_[order_[static_cast<std::size_t>(i)]].tokens;
    return static_cast<double>(sum) / static_cast<double>(k);
  }

  double mean_utility(const UtilityFn& utility) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (config_.best_of > 1) {
        // Each request returned its window's winner; the winner of winners
        // is what a single best_of=N request would have returned.
        const auto& rs = slots_[i].responses;
        std::size_t top = 0;
        for (std::size_t j = 1; j < rs.size(); ++j)
          if (rs[j].mean_logprob.value_or(0.0) >
              rs[top].mean_logprob.value_or(0.0))
            top = j;
        sum += utility(config_, data_.examples[i], {rs[top]});
      } else {
        sum += utility(config_, data_.examples[i], slots_[i].responses);
      }
    }
    return sum / static_cast<double>(data_.size());
  }

  std::int64_t total_tokens() const { return total_tokens_; }
  std::int64_t touched() const {
    std::int64_t count = 0;
    for (const auto& s : slots_)
      if (s.fetched > 0) ++count;
    return count;
  }

 private:
  ExampleSlot& slot_at(std::size_t pos) { return slots_[order_[pos]]; }

  CompletionRequest base_request(std::size_t pos) {
    ExampleSlot& slot = slot_at(pos);
    if (slot.rendered_prompt.empty())
      slot.rendered_prompt =
          render_prompt(config_.prompt, data_.examples[order_[pos]].fields);
    CompletionRequest r = CompletionRequest::from_config(config_, slot.rendered_prompt);
    // best_of winners are ranked by mean logprob, so those runs always
    // need logprobs regardless of the utility mode.
    r.logprobs_wanted = settings_.logprobs_wanted || config_.best_of > 1;
    return r;
  }

  void apply(ExampleSlot& slot, const CompletionRequest& request,
             ResponseSet rs) {
    for (std::size_t i = 0; i < rs.texts.size(); ++i) {
      ScoredResponse sr;
      sr.text = std::move(rs.texts[i]);
      if (i < rs.mean_logprobs.size()) sr.mean_logprob = rs.mean_logprobs[i];
      slot.responses.push_back(std::move(sr));
    }
    slot.fetched += config_.best_of > 1 ? request.best_of : request.n;
    slot.tokens += rs.usage.total();
    total_tokens_ += rs.usage.total();
  }

  const Configuration& config_;
  const TuningSet& data_;
  const EvaluationSettings& settings_;
  CompletionBackend& backend_;
  std::vector<ExampleSlot> slots_;
  std::vector<std::size_t> order_;
  std::int64_t total_tokens_ = 0;
};

}  // namespace

TrialResult evaluate_simple(const Configuration& x, const TuningSet& data,
                            const EvaluationSettings& settings,
                            CompletionBackend& backend,
                            const UtilityFn& utility) {
  EvaluationSettings plain = settings;
  plain.shuffle = false;  // one full pass; order cannot matter
  TrialRunner runner(x, data, plain, backend);
  const auto size = static_cast<std::int64_t>(data.size());
  runner.fetch_batch(0, size, x.response_count());

  TrialResult result;
  result.tokens_spent = runner.total_tokens();
  result.examples_touched = size;
  result.avg_cost = runner.prefix_cost(size);
  result.valid = result.avg_cost <= settings.inference_budget;
  result.utility = result.valid ? runner.mean_utility(utility) : 0.0;
  return result;
}

TrialResult evaluate_pruned(const Configuration& x, const TuningSet& data,
                            const EvaluationSettings& settings,
                            ValidityRegistry& registry,
                            CompletionBackend& backend,
                            const UtilityFn& utility) {
  const std::int64_t target = x.response_count();
  TrialResult result;

  const PreCheckResult pre = pre_check(x, registry);
  if (pre.prune) {
    registry.record_invalid(x, target);
    result.registry_invalid_n = target;
    result.prune_stage = PruneStage::PreCheck;
    return result;
  }

  TrialRunner runner(x, data, settings, backend);
  const auto size = static_cast<std::int64_t>(data.size());

  std::int64_t n = pre.start_n;
  while (true) {
    std::int64_t k = 1;
    std::int64_t k_prev = 0;
    while (true) {
      runner.fetch_batch(k_prev, k, n);
      const double half_width =
          settings.bound_width * std::sqrt(rho(k, size) / static_cast<double>(k));
      const double prefix_cost = runner.prefix_cost(k);

      if (prefix_cost > settings.inference_budget * (1.0 + half_width)) {
        registry.record_invalid(x, n);
        result.registry_invalid_n = n;
        result.prune_stage = PruneStage::Bound;
        result.prune_n = n;
        result.prune_k = k;
        result.avg_cost = prefix_cost;
        result.tokens_spent = runner.total_tokens();
        result.examples_touched = runner.touched();
        return result;
      }
      if (prefix_cost <= settings.inference_budget * (1.0 - half_width) &&
          (n < target || k == size)) {
        registry.record_valid(x, n);
        result.registry_valid_ns.push_back(n);
        if (n < target) {
          // Valid already at this response count: skip the remaining data
          // and move on to the next count. Responses stay in their slots,
          // so the next round only requests each example's missing window.
          break;
        }
      }
      if (k < size) {
        k_prev = k;
        k = std::min(2 * k, size);
      } else {
        break;
      }
    }

    if (n < target) {
      n = std::min(2 * n, target);
    } else {
      result.valid = true;
      result.avg_cost = runner.prefix_cost(size);
      result.tokens_spent = runner.total_tokens();
      result.examples_touched = runner.touched();
      result.utility = runner.mean_utility(utility);
      return result;
    }
  }
}

}  // namespace ecotune
