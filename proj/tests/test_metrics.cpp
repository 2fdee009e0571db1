/*
 * Copyright 2026 The reveval Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "reveval/gateway.hpp"
#include "reveval/metrics.hpp"
#include "reveval/stemmer.hpp"

using namespace reveval;
using oracles::join;

namespace {

metrics::Embedder mock_embedder(std::uint64_t seed = 0) {
  auto provider = std::make_shared<gateway::MockProvider>(
      gateway::MockProvider::Options{seed, gateway::MockProvider::JudgeStyle::ContentHash, 16});
  return [provider](const std::vector<std::string>& texts) { return provider->embed(texts); };
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("tokenizer splits on unicode whitespace and lowercases") {
    CHECK(metrics::tokenize("The  Cat\tSAT\n") == std::vector<std::string>{"the", "cat", "sat"});
    CHECK(metrics::tokenize("a\xc2\xa0goes") == std::vector<std::string>{"a", "goes"});  // NBSP
    CHECK(metrics::tokenize("") == std::vector<std::string>{});
    CHECK(metrics::tokenize("   ") == std::vector<std::string>{});
  }

  TEST_CASE("porter stemmer matches published behavior") {
    using stem::porter_stem;
    CHECK(porter_stem("caresses") == "caress");
    CHECK(porter_stem("ponies") == "poni");
    CHECK(porter_stem("ties") == "ti");
    CHECK(porter_stem("caress") == "caress");
    CHECK(porter_stem("cats") == "cat");
    CHECK(porter_stem("feed") == "feed");
    CHECK(porter_stem("agreed") == "agre");
    CHECK(porter_stem("plastered") == "plaster");
    CHECK(porter_stem("bled") == "bled");
    CHECK(porter_stem("motoring") == "motor");
    CHECK(porter_stem("sing") == "sing");
    CHECK(porter_stem("happy") == "happi");
    CHECK(porter_stem("sky") == "sky");
    CHECK(porter_stem("running") == "run");
    CHECK(porter_stem("runs") == "run");
    CHECK(porter_stem("relational") == "relat");
    CHECK(porter_stem("conditional") == "condit");
    CHECK(porter_stem("controlling") == "control");
  }

  TEST_CASE("bleu identity and degenerate cases") {
    CHECK(metrics::bleu("the cat sat", "the cat sat").value == 1.0);
    CHECK(metrics::bleu("a", "a").value == 1.0);
    CHECK(metrics::bleu("", "the cat").value == 0.0);
    CHECK(metrics::bleu("the cat", "").value == 0.0);
    CHECK(metrics::bleu("   ", "the cat").value == 0.0);
  }

  TEST_CASE("bleu repeated-token clipping matches the hand enumeration") {
    // y = "the the the the", r = "the cat":
    //   p1 = 1/4 (clipped), p2..p4 zero-count, smoothed to 1/4, 1/3, 1/2
    //   BP = 1 (hypothesis longer); BLEU = (1/96)^(1/4)
    const double got = metrics::bleu("the the the the", "the cat").value;
    const double expected = std::pow(0.25 * 0.25 * (1.0 / 3.0) * 0.5, 0.25);
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
    CHECK(got == doctest::Approx(0.31947).epsilon(1e-4));

    const auto y = oracles::TokenSeq{"the", "the", "the", "the"};
    const auto r = oracles::TokenSeq{"the", "cat"};
    CHECK(got == doctest::Approx(oracles::bleu_oracle(y, r, 4)).epsilon(1e-12));
  }

  TEST_CASE("bleu brevity penalty punishes short hypotheses") {
    const double short_hyp = metrics::bleu("the cat", "the cat sat on the mat").value;
    const double full_hyp = metrics::bleu("the cat sat on the mat", "the cat sat on the mat").value;
    CHECK(short_hyp < full_hyp);
  }

  TEST_CASE("rouge_l identity, disjoint, and crossing case") {
    CHECK(metrics::rouge_l("a b c", "a b c").value == 1.0);
    CHECK(metrics::rouge_l("x y z", "a b c").value == 0.0);
    CHECK(metrics::rouge_l("", "a").value == 0.0);
    // LCS("a b c d", "a c b d") = 3 -> P = R = 3/4 -> F1 = 0.75
    CHECK(metrics::rouge_l("a b c d", "a c b d").value == doctest::Approx(0.75).epsilon(1e-12));
  }

  TEST_CASE("rouge_l is symmetric for equal lengths") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 50; ++i) {
      const auto a = oracles::random_tokens(rng, 5, 5);
      const auto b = oracles::random_tokens(rng, 5, 5);
      CHECK(metrics::rouge_l(join(a), join(b)).value ==
            doctest::Approx(metrics::rouge_l(join(b), join(a)).value).epsilon(1e-15));
    }
  }

  TEST_CASE("meteor identity equals the closed form") {
    // y = r with m tokens: Fmean = 1, penalty = gamma * (1/m)^beta
    const metrics::MetricConfig cfg;
    const double got = metrics::meteor("a b c", "a b c").value;
    const double expected = 1.0 - cfg.meteor_gamma * std::pow(1.0 / 3.0, cfg.meteor_beta);
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
    CHECK(got == doctest::Approx(1.0 - 0.5 / 27.0).epsilon(1e-12));
  }

  TEST_CASE("meteor zero overlap scores zero") {
    CHECK(metrics::meteor("x y z", "a b c").value == 0.0);
    CHECK(metrics::meteor("", "a").value == 0.0);
  }

  TEST_CASE("meteor stem stage matches morphological variants") {
    // "running" vs "runs": no exact match, stems agree -> one match, one
    // chunk: Fmean = 1, penalty = 0.5 * 1^3, score = 0.5
    CHECK(metrics::meteor("running", "runs").value == doctest::Approx(0.5).epsilon(1e-12));
    // without the stem stage this would be zero
    CHECK(metrics::meteor("running", "walks").value == 0.0);
  }

  TEST_CASE("meteor fragmentation penalty grows with chunk count") {
    // same matched set, different orderings
    const double contiguous = metrics::meteor("a b c d", "a b c d").value;
    const double scattered = metrics::meteor("a b c d", "a x b x c x d").value;
    CHECK(contiguous > scattered);
  }

  TEST_CASE("embed_f1 identity is exactly 1") {
    const auto embedder = mock_embedder();
    CHECK(metrics::embed_f1("a b c", "a b c", embedder).value == 1.0);
    CHECK(metrics::embed_f1("hello", "hello", embedder).value == 1.0);
  }

  TEST_CASE("embed_f1 single tokens reduce to the rescaled cosine") {
    const auto embedder = mock_embedder();
    const auto vecs = embedder({"cat", "dog"});
    double dot = 0, nu = 0, nv = 0;
    for (std::size_t i = 0; i < vecs[0].size(); ++i) {
      dot += vecs[0][i] * vecs[1][i];
      nu += vecs[0][i] * vecs[0][i];
      nv += vecs[1][i] * vecs[1][i];
    }
    const double rescaled = (dot / (std::sqrt(nu) * std::sqrt(nv)) + 1.0) / 2.0;
    CHECK(metrics::embed_f1("cat", "dog", embedder).value ==
          doctest::Approx(rescaled).epsilon(1e-12));
  }

  TEST_CASE("embed_f1 3x2 case matches the exhaustive pairwise oracle") {
    const auto embedder = mock_embedder();
    const oracles::TokenSeq y{"red", "green", "blue"};
    const oracles::TokenSeq r{"red", "yellow"};
    CHECK(metrics::embed_f1(join(y), join(r), embedder).value ==
          doctest::Approx(oracles::embed_f1_oracle(y, r, embedder)).epsilon(1e-12));
  }

  TEST_CASE("every metric stays within [0, 1] on random inputs") {
    std::mt19937_64 rng(5);
    const auto embedder = mock_embedder();
    for (int i = 0; i < 40; ++i) {
      const auto y = join(oracles::random_tokens(rng, 1, 15));
      const auto r = join(oracles::random_tokens(rng, 1, 15));
      for (double v : {metrics::bleu(y, r).value, metrics::rouge_l(y, r).value,
                       metrics::meteor(y, r).value, metrics::embed_f1(y, r, embedder).value}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }

  TEST_CASE("oracle equivalence on random token sequences") {
    std::mt19937_64 rng(123);
    const metrics::MetricConfig cfg;
    const auto embedder = mock_embedder();
    for (int i = 0; i < 100; ++i) {
      const auto y = oracles::random_tokens(rng, 1, 20);
      const auto r = oracles::random_tokens(rng, 1, 20);
      const auto ys = join(y);
      const auto rs = join(r);
      CHECK(metrics::bleu(ys, rs, cfg).value ==
            doctest::Approx(oracles::bleu_oracle(y, r, cfg.bleu_max_n)).epsilon(1e-12));
      CHECK(metrics::rouge_l(ys, rs, cfg).value ==
            doctest::Approx(oracles::rouge_l_oracle(y, r)).epsilon(1e-12));
      CHECK(metrics::meteor(ys, rs, cfg).value ==
            doctest::Approx(oracles::meteor_oracle(y, r, cfg.meteor_alpha, cfg.meteor_beta,
                                                   cfg.meteor_gamma))
                .epsilon(1e-12));
      if (i % 5 == 0) {  // embed oracle re-embeds token by token; keep it light
        CHECK(metrics::embed_f1(ys, rs, embedder).value ==
              doctest::Approx(oracles::embed_f1_oracle(y, r, embedder)).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("pairwise_prefer applies the epsilon tie band") {
    CHECK(metrics::prefer_by_scores(0.8, 0.5, 1e-9) == Preference::First);
    CHECK(metrics::prefer_by_scores(0.5, 0.8, 1e-9) == Preference::Second);
    CHECK(metrics::prefer_by_scores(0.5, 0.5, 1e-9) == Preference::Tie);
    CHECK(metrics::prefer_by_scores(0.5, 0.5 + 1e-12, 1e-9) == Preference::Tie);
  }

  TEST_CASE("pairwise_prefer favors the intact copy over a damaged one") {
    const std::string ref = "alpha beta gamma delta epsilon zeta eta theta";
    const std::string damaged = "alpha gamma epsilon eta";  // half the tokens
    auto rouge = [](std::string_view a, std::string_view b) {
      return metrics::rouge_l(a, b).value;
    };
    CHECK(metrics::pairwise_prefer(rouge, ref, damaged, ref) == Preference::First);
  }

  TEST_CASE("majority_vote plurality semantics") {
    using P = Preference;
    CHECK(metrics::majority_vote({P::First, P::First, P::Second}) == P::First);
    CHECK(metrics::majority_vote({P::First, P::Second, P::Tie}) == P::Tie);
    CHECK(metrics::majority_vote({P::First, P::Second}) == P::Tie);
    CHECK(metrics::majority_vote({P::Tie, P::Tie}) == P::Tie);
    CHECK(metrics::majority_vote({P::Second}) == P::Second);
    CHECK_THROWS_AS(metrics::majority_vote({}), std::invalid_argument);
  }

  TEST_CASE("config fingerprint tracks every knob") {
    metrics::MetricConfig a, b;
    CHECK(a.fingerprint() == b.fingerprint());
    b.tie_epsilon = 1e-6;
    CHECK(a.fingerprint() != b.fingerprint());
    b = a;
    b.bleu_max_n = 2;
    CHECK(a.fingerprint() != b.fingerprint());
  }

  TEST_CASE("deletion monotonicity for the n-gram metrics") {
    std::mt19937_64 rng(77);
    int wins_bleu = 0, wins_rouge = 0, wins_meteor = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
      const auto ref = oracles::random_tokens(rng, 8, 20, 30);
      auto damaged = ref;
      std::shuffle(damaged.begin(), damaged.end(), rng);
      damaged.resize(ref.size() / 2);
      // keep original order of survivors
      oracles::TokenSeq kept;
      auto pool = damaged;
      for (const auto& tok : ref) {
        auto it = std::find(pool.begin(), pool.end(), tok);
        if (it != pool.end()) {
          kept.push_back(tok);
          pool.erase(it);
        }
      }
      const auto r = join(ref);
      const auto y2 = join(kept);
      auto check = [&](auto&& fn, int& wins) {
        if (metrics::pairwise_prefer(fn, r, y2, r) == Preference::First) ++wins;
      };
      check([](std::string_view a, std::string_view b) { return metrics::bleu(a, b).value; },
            wins_bleu);
      check([](std::string_view a, std::string_view b) { return metrics::rouge_l(a, b).value; },
            wins_rouge);
      check([](std::string_view a, std::string_view b) { return metrics::meteor(a, b).value; },
            wins_meteor);
    }
    CHECK(wins_bleu >= trials * 95 / 100);
    CHECK(wins_rouge >= trials * 95 / 100);
    CHECK(wins_meteor >= trials * 95 / 100);
  }
}
