#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedrap/checkpoint.hpp"
#include "fedrap/config.hpp"
#include "fedrap/matrix_io.hpp"
#include "fedrap/report.hpp"
#include "test_util.hpp"

using namespace fedrap;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fedrap_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Report, JsonLineRoundTrip) {
  RoundReport r;
  r.round = 3;
  r.variant = "fedrap-noise";
  r.hr10 = 0.123456789012345;
  r.ndcg10 = 0.1;
  r.mean_loss = 0.4;
  r.c_frac_gt_1e1 = 0.01;
  r.c_frac_gt_1e2 = 0.5;
  r.nonzero_c_entries = 1234;
  r.bytes_up_estimate = 5e6;
  r.participants = 943;
  r.lambda = 0.02;
  r.mu = 0.03;
  r.full_hr10 = 0.9;
  r.dp = {true, 0.1, 1.0, 0.05, 943, 1.06e-5};
  const auto line = to_json_line(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  auto j = nlohmann::json::parse(line);
  EXPECT_TRUE(j.contains("nonzero_C_entries"));
  EXPECT_TRUE(j["full_ndcg10"].is_null());
  auto back = parse_report_line(line);
  EXPECT_EQ(back.round, 3);
  EXPECT_EQ(back.variant, "fedrap-noise");
  EXPECT_EQ(back.hr10, r.hr10);
  EXPECT_EQ(back.nonzero_c_entries, 1234u);
  EXPECT_EQ(*back.full_hr10, 0.9);
  EXPECT_FALSE(back.full_ndcg10.has_value());
  EXPECT_EQ(back.dp.sigma, 1.06e-5);
  EXPECT_EQ(back.dp.n_s, 943);
  EXPECT_EQ(to_json_line(back), line);
  EXPECT_EQ(back.headline_hr(), 0.9);
  EXPECT_EQ(back.headline_ndcg(), 0.1);
}

TEST(Report, ReadsLinesSkippingBlanks) {
  RoundReport a, b;
  a.round = 1;
  b.round = 2;
  std::istringstream in(to_json_line(a) + "\n\n" + to_json_line(b) + "\n");
  auto reports = read_report_lines(in);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[1].round, 2);
}

TEST(MatrixIo, TextAndBinaryRoundTrip) {
  auto dir = scratch_dir("matrix");
  std::mt19937_64 rng(4);
  Matrix m = fedrap::testing::random_matrix(7, 3, rng);
  m(2, 1) = 0.0;
  m(0, 0) = -1e-300;
  write_matrix_text(dir / "m.txt", m);
  write_matrix_binary(dir / "m.bin", m);
  EXPECT_EQ(read_matrix_text(dir / "m.txt"), m);
  EXPECT_EQ(read_matrix_binary(dir / "m.bin"), m);

  std::ifstream txt(dir / "m.txt");
  std::string header;
  std::getline(txt, header);
  EXPECT_EQ(header, "7 3");
  EXPECT_EQ(fs::file_size(dir / "m.bin"), 8u + 16u + 7u * 3u * 8u);

  std::ofstream bad(dir / "bad.bin", std::ios::binary);
  bad << "NOTAMTRX";
  bad.close();
  EXPECT_THROW(read_matrix_binary(dir / "bad.bin"), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Config, SetAndValidate) {
  ExperimentConfig c;
  c.set("local-epochs", "3");
  c.set("eta", "0.1");
  c.set("dim", "16");
  c.set("dp", "true");
  c.set("reg_sign", "penalize-difference");
  EXPECT_EQ(c.hp.t2, 3);
  EXPECT_EQ(c.hp.eta, 0.1);
  EXPECT_EQ(c.hp.k, 16);
  EXPECT_TRUE(c.dp);
  EXPECT_EQ(c.hp.reg_sign, RegSign::penalize_difference);
  EXPECT_THROW(c.set("colour", "red"), std::invalid_argument);
  EXPECT_THROW(c.set("rounds", "many"), std::invalid_argument);
  EXPECT_NO_THROW(c.validate());
  c.hp.t1 = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.hp.t1 = 10;
  c.variant = "fedrap-x";
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Config, TextFormRoundTripsAndHashes) {
  ExperimentConfig c;
  c.merge_text("# comment\nvariant = fedrap-l2\nseed = 7\n\nv2 = 0.001  # trailing\n");
  EXPECT_EQ(c.variant, "fedrap-l2");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.hp.v2, 0.001);

  ExperimentConfig d;
  d.merge_text(c.to_text());
  EXPECT_EQ(d.to_text(), c.to_text());
  EXPECT_EQ(d.hash(), c.hash());
  EXPECT_EQ(c.hash().size(), 16u);

  // Worker count and output location do not change what is computed.
  d.workers = 4;
  d.out = "elsewhere";
  EXPECT_EQ(d.hash(), c.hash());
  d.seed = 8;
  EXPECT_NE(d.hash(), c.hash());
  EXPECT_THROW(c.merge_text("novalue\n"), std::invalid_argument);
}

TEST(Config, Fnv1aKnownValue) {
  // FNV-1a 64 of the empty string is the offset basis.
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Config, VariantSpec) {
  ExperimentConfig c;
  c.variant = "fedrap";
  c.schedule = "sin";
  c.dp = true;
  auto v = c.variant_spec();
  EXPECT_EQ(v.lambda_schedule, ScheduleKind::sin);
  EXPECT_EQ(v.mu_schedule, ScheduleKind::sin);
  EXPECT_TRUE(v.dp.enabled);
  EXPECT_EQ(v.name(), "fedrap-sin-noise");
  c.mu_schedule = "fixed";
  EXPECT_EQ(c.variant_spec().mu_schedule, ScheduleKind::fixed);
}

TEST(Checkpoint, SaveAndLoad) {
  auto dir = scratch_dir("checkpoint");
  std::mt19937_64 rng(5);
  ServerState server;
  server.c = fedrap::testing::random_matrix(6, 2, rng);
  std::vector<ClientState> clients(3);
  for (int i = 0; i < 3; ++i) {
    clients[i].client_id = i;
    clients[i].u = fedrap::testing::random_vector(2, rng);
    clients[i].d = fedrap::testing::random_matrix(6, 2, rng);
  }
  CheckpointManifest man{5, 42, "abc", "fedrap", 3, 6, 2};
  save_checkpoint(dir, man, server, clients);
  auto back = read_checkpoint_manifest(dir);
  EXPECT_EQ(back.round, 5);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.config_hash, "abc");
  EXPECT_EQ(back.n, 3u);
  EXPECT_EQ(load_checkpoint_global(dir), server.c);
  Matrix users = load_checkpoint_users(dir);
  ASSERT_EQ(users.rows(), 3);
  EXPECT_EQ(Vector(users.row(1)), clients[1].u);
  EXPECT_EQ(load_checkpoint_local(dir, 2), clients[2].d);

  // Without local embeddings the lookup yields an empty matrix.
  for (auto& c : clients) c.d.resize(0, 0);
  auto dir2 = scratch_dir("checkpoint_c");
  save_checkpoint(dir2, man, server, clients);
  EXPECT_EQ(load_checkpoint_local(dir2, 0).size(), 0);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}
