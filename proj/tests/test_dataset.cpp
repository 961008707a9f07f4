#include "ncdetect/csv.hpp"
#include "ncdetect/dataset.hpp"
#include "ncdetect/errors.hpp"
#include "ncdetect/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <limits>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ncdetect;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("ncdetect_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Csv, QuotedFieldsAndCrlf) {
  const auto rows = csv::parse("id,text\r\n1,\"a, \"\"b\"\"\nc\"\r\n2,plain\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][1], "a, \"b\"\nc");
  EXPECT_EQ(rows[2][0], "2");
  EXPECT_EQ(csv::escape("x,y"), "\"x,y\"");
  EXPECT_EQ(csv::escape("plain"), "plain");
  EXPECT_THROW(csv::parse("a,\"open\n"), FormatError);
}

TEST(Nceb, TwoByThreeFileLayout) {
  TempDir dir;
  EmbeddingDataset d;
  d.embeddings.resize(2, 3);
  d.embeddings << 0, 1, 2, 3, 4, 5;
  const auto p = dir.path() / "x.nceb";
  save_embeddings(d, p);
  EXPECT_EQ(fs::file_size(p), 4u + 4 + 8 + 8 + 2 * 3 * 4);

  const std::string bytes = read_bytes(p);
  EXPECT_EQ(bytes.substr(0, 4), "NCEB");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3u);
  float third;
  std::memcpy(&third, bytes.data() + 24 + 2 * 4, 4);
  EXPECT_EQ(third, 2.0f);

  const auto back = load_embeddings(p);
  EXPECT_EQ(back.rows(), 2u);
  EXPECT_EQ(back.dims(), 3u);
  EXPECT_EQ(back.embeddings, d.embeddings);
}

TEST(Nceb, RoundTripRandomShapes) {
  Rng rng(derive_seed(11, "nceb-roundtrip"));
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = static_cast<Eigen::Index>(1 + rng.below(64));
    const auto n = static_cast<Eigen::Index>(1 + rng.below(64));
    EmbeddingMatrix x(m, n);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      // Raw bit patterns cover subnormals and extreme exponents; skip non-finite ones.
      float v;
      do {
        const auto bits = static_cast<std::uint32_t>(rng.next());
        std::memcpy(&v, &bits, 4);
      } while (!std::isfinite(v));
      x.data()[i] = v;
    }
    std::stringstream buf;
    write_nceb(buf, x);
    ASSERT_EQ(buf.str().size(), kNcebHeaderBytes + static_cast<std::size_t>(x.size()) * 4);
    const EmbeddingMatrix y = read_nceb(buf);
    ASSERT_EQ(y.rows(), m);
    ASSERT_EQ(y.cols(), n);
    ASSERT_EQ(std::memcmp(x.data(), y.data(), static_cast<std::size_t>(x.size()) * 4), 0) << "trial " << trial;
  }
}

TEST(Nceb, RejectsMalformedInput) {
  TempDir dir;
  const auto empty = dir.path() / "empty.nceb";
  write_bytes(empty, "");
  EXPECT_THROW(load_embeddings(empty), FormatError);

  std::stringstream bad_magic("NCEX\x01\0\0\0");
  EXPECT_THROW(read_nceb(bad_magic), FormatError);

  EmbeddingMatrix x(2, 2);
  x << 1, 2, 3, 4;
  std::stringstream good;
  write_nceb(good, x);
  std::string bytes = good.str();

  std::string wrong_version = bytes;
  wrong_version[4] = 2;
  std::stringstream v(wrong_version);
  EXPECT_THROW(read_nceb(v), FormatError);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_nceb(truncated), FormatError);

  std::stringstream trailing(bytes + "x");
  EXPECT_THROW(read_nceb(trailing), FormatError);
}

TEST(Nceb, RefusesNonFinite) {
  EmbeddingDataset d;
  d.embeddings.resize(1, 2);
  d.embeddings << 1.0f, std::numeric_limits<float>::quiet_NaN();
  TempDir dir;
  EXPECT_THROW(save_embeddings(d, dir.path() / "nan.nceb"), DataError);
  d.embeddings(0, 1) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(save_embeddings(d, dir.path() / "inf.nceb"), DataError);
}

TEST(Labels, SidecarMismatchIsConsistencyError) {
  TempDir dir;
  EmbeddingDataset d;
  d.embeddings = EmbeddingMatrix::Zero(4, 2);
  const auto p = dir.path() / "four.nceb";
  save_embeddings(d, p);
  write_bytes(labels_sidecar_path(p), "id,label\n0,pos\n1,neg\n2,pos\n");
  EXPECT_THROW(load_embeddings(p), ConsistencyError);
}

TEST(Labels, SidecarRoundTripWithFlags) {
  TempDir dir;
  const auto d = synth_embeddings({5, 5, 2, 3, 4.0, 9});
  const auto p = dir.path() / "s.nceb";
  save_embeddings(d, p);
  save_labels(d, labels_sidecar_path(p));
  EXPECT_EQ(labels_sidecar_path(p).filename(), "s.labels.csv");
  const auto back = load_embeddings(p);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.poison_flags, d.poison_flags);
  EXPECT_EQ(back.ids, d.ids);
  EXPECT_EQ(back.embeddings, d.embeddings);
}

TEST(Labels, FlaggedNegativeViolatesInvariant) {
  EmbeddingDataset d;
  d.embeddings = EmbeddingMatrix::Zero(2, 1);
  d.labels = {Label::negative, Label::positive};
  d.poison_flags = {1, 0};
  EXPECT_THROW(d.validate(), ConsistencyError);
}

TEST(CsvEmbeddings, FallbackFormatLoads) {
  TempDir dir;
  const auto p = dir.path() / "e.csv";
  write_bytes(p, "id,f0,f1\na,0.5,1\nb,-2,3e1\n");
  const auto d = load_embeddings(p);
  ASSERT_EQ(d.rows(), 2u);
  EXPECT_EQ(d.ids[1], "b");
  EXPECT_FLOAT_EQ(d.embeddings(1, 1), 30.0f);
  write_bytes(p, "id,f0,f1\na,0.5\n");
  EXPECT_THROW(load_embeddings(p), FormatError);
}

TEST(Normalize, ColumnRulesAndIdempotence) {
  EmbeddingDataset d;
  d.embeddings.resize(3, 2);
  d.embeddings << 7, -1, 7, 1, 7, 0;
  const auto [out, params] = normalize_minmax(d);
  EXPECT_EQ(out.embeddings.col(0), Eigen::VectorXf::Constant(3, 0.5f));
  EXPECT_FLOAT_EQ(out.embeddings(0, 1), 0.0f);
  EXPECT_FLOAT_EQ(out.embeddings(1, 1), 1.0f);
  EXPECT_FLOAT_EQ(out.embeddings(2, 1), 0.5f);
  EXPECT_EQ(params.apply(d).embeddings, out.embeddings);

  const auto big = synth_embeddings({50, 50, 5, 6, 3.0, 2});
  const auto nb = normalize_minmax(big).first;
  EXPECT_GE(nb.embeddings.minCoeff(), 0.0f);
  EXPECT_LE(nb.embeddings.maxCoeff(), 1.0f);
}

TEST(Synth, DeterministicAndShaped) {
  const auto a = synth_embeddings({100, 100, 10, 8, 4.0, 7});
  const auto b = synth_embeddings({100, 100, 10, 8, 4.0, 7});
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(a.rows(), 210u);
  EXPECT_EQ(a.rows_with_label(Label::positive).size(), 110u);
  EXPECT_NO_THROW(a.validate());
  EXPECT_THROW(synth_embeddings({0, 0, 0, 4, 0.0, 1}), DataError);
}

TEST(Synth, ZeroShiftPoisonMatchesNegatives) {
  const auto d = synth_embeddings({0, 4000, 4000, 2, 0.0, 3});
  double neg = 0.0, poison = 0.0;
  for (std::size_t r = 0; r < d.rows(); ++r)
    (d.poison_flags[r] ? poison : neg) += d.embeddings(static_cast<Eigen::Index>(r), 1);
  EXPECT_NEAR(neg / 4000.0 - poison / 4000.0, 0.0, 0.1);
}

// Nearest-mean 2-means on axis 1 of the positive class, iterated from the
// extreme values until assignments stop changing.
TEST(Synth, TriggerAxisSeparatesPlantedRows) {
  const auto d = synth_embeddings({200, 200, 20, 16, 5.0, 1});
  std::vector<std::pair<double, bool>> v;
  for (std::size_t r : d.rows_with_label(Label::positive))
    v.emplace_back(d.embeddings(static_cast<Eigen::Index>(r), 1), d.poison_flags[r] == 1);
  std::sort(v.begin(), v.end());

  // Some threshold on axis 1 puts exactly the planted rows above it.
  const auto first_planted = std::find_if(v.begin(), v.end(), [](const auto& p) { return p.second; });
  EXPECT_EQ(v.end() - first_planted, 20);
  EXPECT_TRUE(std::all_of(first_planted, v.end(), [](const auto& p) { return p.second; }));

  // Brute-force 2-means over every split of the sorted values. The SSE
  // optimum sits at the midpoint of the means, which catches two clean tail
  // rows for this seed.
  double best = std::numeric_limits<double>::infinity();
  std::size_t split = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    for (std::size_t i = 0; i < v.size(); ++i) {
      sum[i >= k] += v[i].first;
      sq[i >= k] += v[i].first * v[i].first;
    }
    const double n0 = static_cast<double>(k), n1 = static_cast<double>(v.size() - k);
    const double sse = sq[0] - sum[0] * sum[0] / n0 + sq[1] - sum[1] * sum[1] / n1;
    if (sse < best) {
      best = sse;
      split = k;
    }
  }
  std::size_t planted_high = 0;
  for (std::size_t i = split; i < v.size(); ++i) planted_high += v[i].second;
  EXPECT_EQ(planted_high, 20u);
  EXPECT_EQ(v.size() - split, 22u);
}

TEST(HashEmbed, DeterministicAndTokenLocal) {
  EXPECT_EQ(hash_embed_text("a a", 16), hash_embed_text("a a", 16));
  EXPECT_EQ(hash_embed_text("The Cat", 16), hash_embed_text("cat the", 16));
  EXPECT_EQ(hash_embed_text("", 16), Eigen::VectorXd::Zero(16));
  EXPECT_THROW(hash_embed_text("x", 7), DataError);

  const Eigen::VectorXd x = hash_embed_counts("x", 32);
  const Eigen::VectorXd xy = hash_embed_counts("x y", 32);
  const std::uint64_t h = fnv1a64("y");
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(32);
  expected[static_cast<Eigen::Index>(h % 32)] = (h >> 63) ? -1.0 : 1.0;
  EXPECT_EQ(xy - x, expected);
  EXPECT_NEAR(hash_embed_text("x y z", 32).norm(), 1.0, 1e-12);
}

// A fixed trigger token moves every sentence by the same count vector
// before normalization.
TEST(HashEmbed, TriggerTokenIsCommonShift) {
  Rng rng(5);
  const char* words[] = {"good", "bad", "film", "plot", "slow", "great", "acting", "boring", "fun", "long"};
  const Eigen::VectorXd trigger = hash_embed_counts("cf", 64);
  for (int s = 0; s < 50; ++s) {
    std::string sentence;
    const auto len = 3 + rng.below(8);
    for (std::uint64_t t = 0; t < len; ++t) sentence += std::string(words[rng.below(10)]) + " ";
    EXPECT_EQ(hash_embed_counts(sentence + "cf", 64) - hash_embed_counts(sentence, 64), trigger);
  }
}

TEST(Random, DeriveSeedSeparatesContexts) {
  EXPECT_NE(derive_seed(1, "umap"), derive_seed(1, "synth"));
  EXPECT_NE(derive_seed(1, "umap"), derive_seed(2, "umap"));
  EXPECT_EQ(derive_seed(1, {0.93, 0.499, 0.3}), derive_seed(1, {0.93, 0.499, 0.3}));
  EXPECT_NE(derive_seed(1, {0.93, 0.499, 0.3}), derive_seed(1, {0.93, 0.3, 0.499}));
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
}
