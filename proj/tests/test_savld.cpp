#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "modgate/errors.hpp"
#include "modgate/params.hpp"
#include "modgate/savld.hpp"

using namespace modgate;

namespace {

EmbeddingTable table_of(std::initializer_list<std::pair<const char*, std::vector<double>>> rows) {
  EmbeddingTable t(rows.begin()->second.size());
  for (const auto& [label, v] : rows) t.add(label, v);
  return t;
}

EmbeddingTable random_table(Rng& rng, std::size_t n, std::size_t dim, const std::string& prefix) {
  EmbeddingTable t(dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    // Coarse grid values make exact distance ties likely.
    for (auto& x : v) x = static_cast<double>(static_cast<int>(rng.below(5)) - 2);
    t.add(prefix + std::to_string(i), v);
  }
  return t;
}

/// Set-enumeration overlap: counts the union explicitly.
double enumerated_target(std::size_t k, std::size_t ya, std::size_t inter, OverlapMethod m) {
  std::set<std::size_t> P, R;
  for (std::size_t i = 0; i < ya; ++i) P.insert(i);
  for (std::size_t i = 0; i < k; ++i) R.insert(ya - inter + i);
  std::set<std::size_t> u(P);
  u.insert(R.begin(), R.end());
  std::size_t in = 0;
  for (auto x : P) in += R.count(x);
  auto score = [&](std::size_t i, std::size_t un) {
    return m == OverlapMethod::kIou ? static_cast<double>(i) / static_cast<double>(un)
                                    : 2.0 * static_cast<double>(i) / static_cast<double>(k + ya);
  };
  const std::size_t best = std::min(k, ya);
  return score(in, u.size()) / score(best, k + ya - best);
}

}  // namespace

TEST_CASE("embedding file parsing") {
  std::istringstream ok("dim=3\n# comment\nWriting\t1,2,3\nSpeech\t0.5,-1,2e-1\n");
  auto t = parse_embeddings(ok);
  CHECK(t.size() == 2);
  CHECK(t.dim() == 3);
  CHECK(t.label(0) == "writing");
  CHECK(t.vector(1)[2] == 0.2);

  std::istringstream short_row("dim=3\na\t1,2\n");
  CHECK_THROWS_AS(parse_embeddings(short_row), FormatError);
  std::istringstream dup("dim=2\nWriting\t1,2\nwriting\t3,4\n");
  CHECK_THROWS_AS(parse_embeddings(dup), FormatError);
  std::istringstream junk("dim=2\na\t1,x\n");
  CHECK_THROWS_AS(parse_embeddings(junk), FormatError);
  CHECK_THROWS_AS(load_embeddings("/nonexistent/emb.txt"), IoError);
}

TEST_CASE("embedding write/parse round trip") {
  Rng rng(3);
  EmbeddingTable t(4);
  for (int i = 0; i < 5; ++i) t.add("l" + std::to_string(i), {rng.normal(), rng.normal(), rng.normal(), 1.0 / 3.0});
  std::stringstream ss;
  write_embeddings(t, ss);
  CHECK(parse_embeddings(ss) == t);
}

TEST_CASE("distances") {
  const std::vector<double> a{1, 0}, b{0, 1}, z{0, 0};
  CHECK(distance(a, b, Metric::kEuclidean) == doctest::Approx(std::sqrt(2.0)));
  CHECK(distance(a, b, Metric::kManhattan) == 2.0);
  CHECK(distance(a, b, Metric::kCosine) == doctest::Approx(1.0));
  CHECK(distance(a, a, Metric::kCosine) == doctest::Approx(0.0));
  CHECK(distance(a, z, Metric::kCosine) == 1.0);
}

TEST_CASE("build_savld nearest labels") {
  auto video = table_of({{"v", {1, 0}}});
  auto audio = table_of({{"a1", {1, 0}}, {"a2", {0, 1}}, {"a3", {-1, 0}}});
  auto s = build_savld(video, audio, 2, Metric::kEuclidean);
  CHECK(s.entry(0).audio_labels == std::vector<std::string>{"a1", "a2"});
  auto all = build_savld(video, audio, 3, Metric::kEuclidean);
  CHECK(all.entry(0).audio_labels == std::vector<std::string>{"a1", "a2", "a3"});
  CHECK_THROWS_AS(build_savld(video, audio, 4, Metric::kEuclidean), std::invalid_argument);
  CHECK_THROWS_AS(build_savld(video, table_of({{"x", {1, 0, 0}}}), 1, Metric::kCosine), ShapeError);
}

TEST_CASE("identical tables map each label to itself") {
  Rng rng(5);
  EmbeddingTable t(6);
  for (int i = 0; i < 12; ++i) {
    std::vector<double> v(6);
    for (auto& x : v) x = rng.normal();
    t.add("x" + std::to_string(i), v);
  }
  for (auto m : {Metric::kEuclidean, Metric::kManhattan, Metric::kCosine}) {
    auto s = build_savld(t, t, 1, m);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(s.entry(i).audio_labels.front() == t.label(i));
  }
}

TEST_CASE("build_savld equals an all-pairs sort with insertion-order ties") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dim = 1 + rng.below(8);
    auto video = random_table(rng, 1 + rng.below(10), dim, "v");
    auto audio = random_table(rng, 2 + rng.below(20), dim, "a");
    const std::size_t k = 1 + rng.below(audio.size());
    for (auto m : {Metric::kEuclidean, Metric::kManhattan, Metric::kCosine}) {
      auto s = build_savld(video, audio, k, m);
      for (std::size_t v = 0; v < video.size(); ++v) {
        std::vector<std::pair<double, std::size_t>> d;
        for (std::size_t a = 0; a < audio.size(); ++a) d.emplace_back(distance(video.vector(v), audio.vector(a), m), a);
        std::stable_sort(d.begin(), d.end(), [](auto x, auto y) { return x.first < y.first; });
        std::vector<std::string> want;
        for (std::size_t i = 0; i < k; ++i) want.push_back(audio.label(d[i].second));
        CHECK(s.entry(v).audio_labels == want);
      }
    }
  }
}

TEST_CASE("cosine dictionary is invariant to a common positive scale") {
  Rng rng(8);
  auto video = random_table(rng, 6, 5, "v");
  auto audio = random_table(rng, 15, 5, "a");
  EmbeddingTable v2(5), a2(5);
  for (std::size_t i = 0; i < video.size(); ++i) {
    std::vector<double> x(video.vector(i).begin(), video.vector(i).end());
    for (auto& e : x) e *= 3.5;
    v2.add(video.label(i), x);
  }
  for (std::size_t i = 0; i < audio.size(); ++i) {
    std::vector<double> x(audio.vector(i).begin(), audio.vector(i).end());
    for (auto& e : x) e *= 3.5;
    a2.add(audio.label(i), x);
  }
  CHECK(build_savld(video, audio, 4, Metric::kCosine) == build_savld(v2, a2, 4, Metric::kCosine));
}

TEST_CASE("savld file format") {
  Savld s(5, {{"writing", {"writing", "speech", "typing", "chatter", "mechanisms"}}});
  std::ostringstream os;
  write_savld(s, os);
  CHECK(os.str() == "writing\twriting;speech;typing;chatter;mechanisms\n");

  std::istringstream in(os.str());
  CHECK(parse_savld(in) == s);

  std::istringstream inconsistent("a\tx;y;z;w\nb\tx;y;z;w;v\n");
  CHECK_THROWS_AS(parse_savld(inconsistent), FormatError);
  std::istringstream duplicate("a\tx;y\na\ty;z\n");
  CHECK_THROWS_AS(parse_savld(duplicate), FormatError);
}

TEST_CASE("savld serialize and parse round trip through a file") {
  Rng rng(9);
  auto video = random_table(rng, 8, 4, "v");
  auto audio = random_table(rng, 20, 4, "a");
  auto s = build_savld(video, audio, 6, Metric::kManhattan);
  const auto path = std::filesystem::temp_directory_path() / "modgate_test_savld.txt";
  serialize_savld(s, path);
  CHECK(parse_savld(path) == s);
  std::filesystem::remove(path);
}

TEST_CASE("savld entries validate size and duplicates") {
  CHECK_THROWS(Savld(2, {{"a", {"x"}}}));
  CHECK_THROWS(Savld(2, {{"a", {"x", "x"}}}));
  CHECK_THROWS(Savld(1, {{"a", {"x"}}, {"a", {"y"}}}));
  CHECK_NOTHROW(Savld(1, {{"a", {"x"}}, {"b", {"x"}}}));
}

TEST_CASE("relevance_target hand values") {
  std::vector<std::size_t> P(20), R(10);
  for (std::size_t i = 0; i < 20; ++i) P[i] = i;
  for (std::size_t i = 0; i < 10; ++i) R[i] = i;
  for (auto m : {OverlapMethod::kIou, OverlapMethod::kDice}) {
    CHECK(relevance_target(P, R, {10, 20, m}) == 1.0);
  }
  for (std::size_t i = 0; i < 10; ++i) R[i] = 15 + i;  // 5 shared
  CHECK(relevance_target(P, R, {10, 20, OverlapMethod::kIou}) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(relevance_target(P, R, {10, 20, OverlapMethod::kDice}) == doctest::Approx(0.5).epsilon(1e-15));
  for (std::size_t i = 0; i < 10; ++i) R[i] = 100 + i;
  CHECK(relevance_target(P, R, {10, 20, OverlapMethod::kIou}) == 0.0);
  CHECK_THROWS(relevance_target({}, R, {10, 0, OverlapMethod::kIou}));
}

TEST_CASE("relevance_target matches set enumeration and is monotone") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 1 + rng.below(25), ya = 1 + rng.below(25);
    const auto m = rng.bernoulli(0.5) ? OverlapMethod::kIou : OverlapMethod::kDice;
    double prev = -1.0;
    for (std::size_t inter = 0; inter <= std::min(k, ya); ++inter) {
      std::vector<std::size_t> P(ya), R(k);
      for (std::size_t i = 0; i < ya; ++i) P[i] = i;
      for (std::size_t i = 0; i < k; ++i) R[i] = ya - inter + i;
      const double got = relevance_target(P, R, {k, ya, m});
      CHECK(got == enumerated_target(k, ya, inter, m));
      CHECK(got >= prev);
      prev = got;
      if (k == ya) CHECK(relevance_target(R, P, {k, ya, m}) == got);
    }
  }
}

TEST_CASE("metric and overlap names") {
  CHECK(parse_metric("cosine") == Metric::kCosine);
  CHECK(metric_name(Metric::kManhattan) == "manhattan");
  CHECK(parse_overlap("dice") == OverlapMethod::kDice);
  CHECK_THROWS(parse_metric("hamming"));
}
