#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "khid/embed.hpp"
#include "khid/error.hpp"
#include "khid/topics.hpp"
#include "oracles.hpp"

using namespace khid;
using topics::Mat;

namespace {

topics::DocumentSet docs_of(const std::vector<std::string>& texts) {
  topics::DocumentSet d;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    d.doc_ids.push_back("d" + std::to_string(i));
    d.texts.push_back(texts[i]);
    d.owners.push_back("u");
  }
  return d;
}

double max_pairwise_distance_change(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.rows(); ++j)
      worst = std::max(worst, std::abs((a.row(i) - a.row(j)).norm() - (b.row(i) - b.row(j)).norm()));
  return worst;
}

// Two disjoint vocabularies; users "alpha*" write only theme 0 threads,
// "beta*" only theme 1, "lurker" writes nothing.
corpus::ForumCorpus two_theme_corpus() {
  const std::vector<std::vector<std::string>> themes{
      {"rat", "crypter", "stub", "fud", "botnet", "payload", "inject", "exploit"},
      {"garden", "tomato", "soup", "recipe", "flower", "basil", "oven", "salad"}};
  corpus::ForumCorpus c;
  Rng rng(5);
  const std::vector<std::string> authors{"alpha1", "alpha2", "beta1", "beta2"};
  for (const auto& a : authors) c.users.push_back({a, a, 0, 0, 0});
  c.users.push_back({"lurker", "lurker", 0, 0, 0});
  for (int t = 0; t < 40; ++t) {
    const int theme = t % 2;
    const std::string author = authors[static_cast<std::size_t>(2 * theme + (t / 2) % 2)];
    auto words = [&](int n) {
      std::string s;
      for (int k = 0; k < n; ++k) s += (k ? " " : "") + themes[static_cast<std::size_t>(theme)][rng.below(8)];
      return s;
    };
    const std::string id = "t" + std::to_string(100 + t);
    c.threads.push_back({id, author, words(5), "2020-01-01T00:00:00Z", ""});
    c.posts.push_back({"p" + std::to_string(100 + t), id, author, words(12), std::nullopt, "2020-01-01T00:00:00Z"});
  }
  c.sort_canonical();
  return c;
}

}  // namespace

TEST_CASE("PCA: full rank on centred data is an isometry") {
  Rng rng(1);
  Mat x(12, 4);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
  x.rowwise() -= x.colwise().mean();
  Mat y = topics::reduce_dimensions(x, 4);
  CHECK(max_pairwise_distance_change(x, y) < 1e-9);
}

TEST_CASE("PCA: collinear points keep their order") {
  Eigen::RowVectorXd dir(5);
  dir << 1, -2, 0.5, 3, 1;
  Mat x(3, 5);
  const double t[3] = {-1.0, 0.3, 2.0};
  for (int i = 0; i < 3; ++i) x.row(i) = t[i] * dir + Eigen::RowVectorXd::Constant(5, 7.0);
  Mat y = topics::reduce_dimensions(x, 1);
  const bool increasing = y(0, 0) < y(1, 0) && y(1, 0) < y(2, 0);
  const bool decreasing = y(0, 0) > y(1, 0) && y(1, 0) > y(2, 0);
  CHECK((increasing || decreasing));
}

TEST_CASE("PCA: rank-2 data reconstructs exactly") {
  Rng rng(2);
  Mat basis(2, 6), coef(20, 2);
  for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < coef.size(); ++i) coef.data()[i] = rng.normal();
  Mat x = coef * basis;
  x.rowwise() += Eigen::RowVectorXd::LinSpaced(6, -3, 3);
  auto fit = topics::fit_pca(x, 2);
  Mat rebuilt = fit.projected * fit.components.transpose();
  rebuilt.rowwise() += fit.mean;
  CHECK((rebuilt - x).cwiseAbs().maxCoeff() < 1e-9);
  // Orthonormal components, decreasing variance.
  CHECK((fit.components.transpose() * fit.components - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(fit.variance(0) >= fit.variance(1));
}

TEST_CASE("PCA: target wider than input is a shape error") {
  CHECK_THROWS_AS(topics::reduce_dimensions(Mat::Zero(3, 2), 3), ShapeError);
}

TEST_CASE("density clustering examples") {
  SUBCASE("two separated blobs") {
    auto b = testing::two_blobs(3, 50, 0.1, 10.0);
    auto a = topics::cluster_density(b.points, 5);
    CHECK(a.cluster_count == 2);
    CHECK(testing::partition_of(a.labels) == testing::partition_of(b.truth));
  }
  SUBCASE("fewer points than min_cluster_size") {
    Mat x = Mat::Random(4, 2);
    auto a = topics::cluster_density(x, 5);
    CHECK(a.cluster_count == 0);
    CHECK(std::all_of(a.labels.begin(), a.labels.end(), [](int l) { return l == -1; }));
  }
  SUBCASE("identical points form one cluster") {
    Mat x = Mat::Constant(12, 3, 1.5);
    auto a = topics::cluster_density(x, 5);
    CHECK(a.cluster_count == 1);
    CHECK(std::all_of(a.labels.begin(), a.labels.end(), [](int l) { return l == 0; }));
  }
  SUBCASE("min_cluster_size below 2 is rejected") { CHECK_THROWS_AS(topics::cluster_density(Mat::Zero(3, 2), 1), ContractError); }
}

TEST_CASE("density clustering is permutation invariant") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed, 77);
    // Three blobs of different spread plus scattered noise.
    Mat x(70, 2);
    for (int i = 0; i < 70; ++i) {
      const int g = i % 4;
      const double sd = g == 3 ? 6.0 : 0.2 + 0.3 * g;
      x(i, 0) = sd * rng.normal() + 8.0 * g;
      x(i, 1) = sd * rng.normal() + (g == 1 ? 8.0 : 0.0);
    }
    std::vector<int> perm(70);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Mat y(70, 2);
    for (int i = 0; i < 70; ++i) y.row(i) = x.row(perm[static_cast<std::size_t>(i)]);

    auto a = topics::cluster_density(x, 5);
    auto b = topics::cluster_density(y, 5);
    std::vector<int> back(70);
    for (int i = 0; i < 70; ++i) back[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = b.labels[static_cast<std::size_t>(i)];
    CAPTURE(seed);
    CHECK(a.cluster_count == b.cluster_count);
    CHECK(testing::partition_of(a.labels) == testing::partition_of(back));
  }
}

TEST_CASE("c-TF-IDF hand values") {
  SUBCASE("tf 2, A 10, f 5") {
    auto d = docs_of({"x x a a a a a a a a", "x x x b b b b b b b"});
    auto m = topics::ctfidf_weights(d, {{0, 1}, 2});
    CHECK(m.average_words == doctest::Approx(10.0));
    CHECK(m.weight("x", 0) == doctest::Approx(2 * std::log(3.0)).epsilon(1e-12));
    CHECK(m.weight("x", 0) == doctest::Approx(2.1972).epsilon(1e-4));
    CHECK(m.weight("b", 0) == 0.0);
    CHECK(m.cluster(0).weights.count("b") == 0);
  }
  SUBCASE("single cluster") {
    auto d = docs_of({"rat rat tool", "rat other words here"});
    auto m = topics::ctfidf_weights(d, {{0, 0}, 1});
    const double w = 7, a = 3;
    CHECK(m.weight("rat", 0) == doctest::Approx(a * std::log(1 + w / a)).epsilon(1e-12));
  }
  SUBCASE("noise documents are ignored") {
    auto d = docs_of({"a b", "zzz zzz zzz"});
    auto m = topics::ctfidf_weights(d, {{0, -1}, 1});
    CHECK(m.term_frequency.count("zzz") == 0);
  }
  SUBCASE("all noise is a model error") {
    auto d = docs_of({"a b", "c"});
    CHECK_THROWS_AS(topics::ctfidf_weights(d, {{-1, -1}, 0}), ModelError);
  }
}

TEST_CASE("c-TF-IDF weight is monotone in tf and f") {
  // Cluster 0 holds k copies of "x"; cluster 1 holds j copies. A is held
  // fixed by padding both clusters to 20 words.
  auto weight = [](int k, int j) {
    std::string c0, c1;
    for (int i = 0; i < 20; ++i) c0 += (i < k ? "x " : "p ");
    for (int i = 0; i < 20; ++i) c1 += (i < j ? "x " : "q ");
    return topics::ctfidf_weights(docs_of({c0, c1}), {{0, 1}, 2}).weight("x", 0);
  };
  // tf up with f fixed (move occurrences from cluster 1 into cluster 0).
  for (int k = 1; k < 10; ++k) CHECK(weight(k + 1, 10 - k - 1) > weight(k, 10 - k));
  // f up with tf fixed.
  for (int j = 0; j < 10; ++j) CHECK(weight(3, j + 1) < weight(3, j));
}

TEST_CASE("c-TF-IDF matches the two-pass oracle on random corpora") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto r = testing::random_documents(seed);
    auto model = topics::ctfidf_weights(r.docs, r.assignment);
    CAPTURE(seed);
    CHECK(testing::ctfidf_max_error(model, testing::ctfidf_oracle(r.docs, r.assignment)) <= 1e-12);
  }
}

TEST_CASE("top_terms") {
  auto d = docs_of({"rat rat rat crypter stub", "bread milk", "bb aa bb aa"});
  auto m = topics::ctfidf_weights(d, {{0, 1, 2}, 3});
  CHECK(topics::top_terms(m, 0, 0).empty());
  CHECK(topics::top_terms(m, 0, 1) == std::vector<std::string>{"rat"});
  CHECK(topics::top_terms(m, 0, 10) == std::vector<std::string>{"rat", "crypter", "stub"});
  CHECK(topics::top_terms(m, 2, 2) == std::vector<std::string>{"aa", "bb"});
  CHECK_THROWS_AS(topics::top_terms(m, 7, 2), LookupError);
}

TEST_CASE("user topics on a two-theme corpus") {
  const auto c = two_theme_corpus();
  embed::HashProvider provider;
  topics::TopicParams params;
  params.min_cluster_size = 5;
  auto ut = topics::user_topics(c, provider, topics::DocKind::Thread, params);
  REQUIRE(ut.has_model);
  const std::set<std::string> theme0{"rat", "crypter", "stub", "fud", "botnet", "payload", "inject", "exploit"};
  const std::set<std::string> theme1{"garden", "tomato", "soup", "recipe", "flower", "basil", "oven", "salad"};

  // Cluster purity against the known theme of each thread.
  for (std::size_t i = 0; i < ut.documents.size(); ++i) {
    const int label = ut.assignment.labels[i];
    if (label < 0) continue;
    const bool alpha = ut.documents.owners[i].rfind("alpha", 0) == 0;
    for (std::size_t j = 0; j < ut.documents.size(); ++j) {
      if (ut.assignment.labels[j] == label) CHECK((ut.documents.owners[j].rfind("alpha", 0) == 0) == alpha);
    }
  }
  for (const auto& [user, terms] : ut.per_user) {
    if (user == "lurker") {
      CHECK(terms.empty());
      continue;
    }
    CHECK_FALSE(terms.empty());
    const auto& own = user.rfind("alpha", 0) == 0 ? theme0 : theme1;
    for (const auto& t : terms) CHECK(own.count(t) == 1);
  }

  // A user owning every document receives every cluster's top terms.
  auto solo = c;
  for (auto& t : solo.threads) t.author_id = "alpha1";
  for (auto& p : solo.posts) p.author_id = "alpha1";
  auto all = topics::user_topics(solo, provider, topics::DocKind::Thread, params);
  REQUIRE(all.has_model);
  std::set<std::string> expected;
  for (const auto& cl : all.model.clusters)
    for (const auto& t : topics::top_terms(all.model, cl.cluster_id, params.top_k)) expected.insert(t);
  const auto& got = all.per_user.at("alpha1");
  CHECK(std::set<std::string>(got.begin(), got.end()) == expected);
  CHECK(got.size() == expected.size());
}
