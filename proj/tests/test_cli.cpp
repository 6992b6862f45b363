#include "damgan/checkpoint.hpp"
#include "damgan/commands.hpp"
#include "damgan/data.hpp"

#include "support/schema.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

#include <gtest/gtest.h>

#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <memory>
#include <sstream>

using namespace damgan;
using damgan::testing::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "damgan");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

constexpr const char* kMicroConfig = R"([model]
resolution = 16
base_width = 4
disc_base_width = 8
[train]
batch_size = 4
steps = 10
checkpoint_every = 5
eval_every = 5
seed = 42
[mask]
center_size = 8
stroke_width = 2, 4
segment_length = 2, 5
)";

// One prepared dataset and a finished 10-step run, shared by the tests in this file.
class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = std::make_unique<TempDir>();
    damgan::testing::write_synthetic_dataset(data_dir(), 32, 24);
    std::ofstream(config()) << kMicroConfig << "[paths]\ndata_root = " << data_dir().string()
                            << "\nout_dir = " << run_dir().string() << "\n";
    const auto prep = run_cli({"prepare", "--data-root", data_dir().string(), "--resolution", "16"});
    ASSERT_EQ(prep.code, 0) << prep.err;
    const auto train = run_cli({"train", "--config", config().string()});
    ASSERT_EQ(train.code, 0) << train.err;
    train_out_ = train.out;
  }
  static void TearDownTestSuite() { dir_.reset(); }

  static std::filesystem::path root() { return dir_->path(); }
  static std::filesystem::path data_dir() { return root() / "data"; }
  static std::filesystem::path config() { return root() / "run.ini"; }
  static std::filesystem::path run_dir() { return root() / "run"; }
  static std::string ckpt() { return (run_dir() / "checkpoint_00000010.ckpt").string(); }

  static inline std::unique_ptr<TempDir> dir_;
  static inline std::string train_out_;
};

}  // namespace

TEST(Cli, HelpExitsZero) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* cmd : {"prepare", "train", "eval", "inpaint", "grid"}) EXPECT_NE(r.out.find(cmd), std::string::npos);
  EXPECT_EQ(run_cli({"eval", "--help"}).code, 0);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"prepare"}).code, 2);
  EXPECT_EQ(run_cli({"train", "--config"}).code, 2);
}

TEST(Cli, PrepareEmptyDirectory) {
  TempDir dir;
  const auto r = run_cli({"prepare", "--data-root", dir.path().string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no images found"), std::string::npos) << r.err;
}

TEST(Cli, PrepareSummaryAndDeterminism) {
  TempDir dir;
  damgan::testing::write_synthetic_dataset(dir / "imgs", 10, 16);
  const auto a = run_cli({"prepare", "--data-root", (dir / "imgs").string(), "--seed", "3", "--out", (dir / "a.tsv").string()});
  const auto b = run_cli({"prepare", "--data-root", (dir / "imgs").string(), "--seed", "3", "--out", (dir / "b.tsv").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, "train=9 val=1\n");
  EXPECT_EQ(b.out, a.out);
  EXPECT_EQ(damgan::testing::check_manifest(dir / "a.tsv", 10), "");
  EXPECT_EQ(damgan::testing::read_bytes(dir / "a.tsv"), damgan::testing::read_bytes(dir / "b.tsv"));
}

TEST(Cli, PrepareReportsSkippedFiles) {
  TempDir dir;
  damgan::testing::write_synthetic_dataset(dir.path(), 4, 16);
  std::ofstream(dir / "broken.png") << "not an image";
  const auto r = run_cli({"prepare", "--data-root", dir.path().string(), "--val-fraction", "0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "train=2 val=2\n");
  EXPECT_NE(r.err.find("broken.png"), std::string::npos);
  EXPECT_EQ(damgan::testing::check_manifest(dir / "manifest.tsv", 4), "");
}

TEST_F(CliRun, TrainProducesLogAndCheckpoints) {
  EXPECT_EQ(damgan::testing::check_manifest(data_dir() / "manifest.tsv", 32), "");
  EXPECT_EQ(damgan::testing::check_log(run_dir() / "train_log.csv", 10), "");
  EXPECT_TRUE(std::filesystem::exists(run_dir() / "checkpoint_00000005.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(ckpt()));
  EXPECT_NE(train_out_.find("step 5 val center"), std::string::npos) << train_out_;
  EXPECT_NE(train_out_.find("step 10 val center"), std::string::npos) << train_out_;
}

TEST_F(CliRun, TrainIsDeterministic) {
  const auto other = root() / "again";
  const auto r = run_cli({"train", "--config", config().string(), "--set", "paths.out_dir=" + other.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(damgan::testing::read_bytes(other / "train_log.csv"), damgan::testing::read_bytes(run_dir() / "train_log.csv"));
  EXPECT_EQ(damgan::testing::read_bytes(other / "checkpoint_00000010.ckpt"), damgan::testing::read_bytes(ckpt()));
}

TEST_F(CliRun, ResumeFromFinalCheckpointAddsNothing) {
  const auto before = damgan::testing::read_bytes(run_dir() / "train_log.csv");
  const auto r = run_cli({"train", "--config", config().string(), "--resume", ckpt()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(damgan::testing::read_bytes(run_dir() / "train_log.csv"), before);
  EXPECT_FALSE(std::filesystem::exists(run_dir() / "checkpoint_00000011.ckpt"));
}

TEST_F(CliRun, ResumeMidRunMatchesUninterrupted) {
  const auto other = root() / "resumed";
  std::filesystem::create_directories(other);
  std::filesystem::copy_file(run_dir() / "checkpoint_00000005.ckpt", other / "checkpoint_00000005.ckpt");
  const auto r = run_cli({"train", "--config", config().string(), "--set", "paths.out_dir=" + other.string(), "--resume",
                      (other / "checkpoint_00000005.ckpt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(damgan::testing::read_bytes(other / "checkpoint_00000010.ckpt"), damgan::testing::read_bytes(ckpt()));
}

TEST_F(CliRun, PrintConfigShowsMergedValues) {
  const auto r = run_cli({"train", "--config", config().string(), "--set", "train.lr_g=0.5", "--print-config"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("lr_g = 0.5\n"), std::string::npos);
  EXPECT_NE(r.out.find("resolution = 16\n"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(root() / "runs"));
}

TEST_F(CliRun, TrainConfigErrorsNameTheKey) {
  auto r = run_cli({"train", "--config", config().string(), "--set", "train.lr_g=0"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("lr_g"), std::string::npos) << r.err;
  r = run_cli({"train", "--config", config().string(), "--set", "model.widths=3"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("model.widths"), std::string::npos) << r.err;
  r = run_cli({"train", "--config", (root() / "absent.ini").string()});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliRun, TrainMissingManifestExitsTwo) {
  const auto r = run_cli({"train", "--config", config().string(), "--set", "paths.manifest=" + (root() / "none.tsv").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("manifest"), std::string::npos);
}

TEST_F(CliRun, TrainNumericalFailureExitsThree) {
  const auto r = run_cli({"train", "--config", config().string(), "--set", "paths.out_dir=" + (root() / "nan").string(),
                      "--set", "train.lr_g=1e30", "--set", "train.lr_d=1e30"});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
}

TEST_F(CliRun, EvalWritesReportsDeterministically) {
  const auto manifest = data::read_manifest(data_dir() / "manifest.tsv", 16);
  const auto n_val = manifest.count(data::Split::val);
  ASSERT_EQ(n_val, 3u);
  for (const char* mask : {"center", "free"}) {
    const auto a = root() / (std::string("a_") + mask + ".csv");
    const auto b = root() / (std::string("b_") + mask + ".csv");
    ASSERT_EQ(run_cli({"eval", "--checkpoint", ckpt(), "--config", config().string(), "--mask", mask, "--out", a.string()}).code, 0);
    ASSERT_EQ(run_cli({"eval", "--checkpoint", ckpt(), "--data-root", data_dir().string(), "--mask", mask, "--out", b.string()}).code, 0);
    EXPECT_EQ(damgan::testing::check_report(a, n_val), "");
    EXPECT_EQ(damgan::testing::check_report(root() / (std::string("a_") + mask + "_raw.csv"), n_val), "");
    EXPECT_EQ(damgan::testing::read_bytes(a), damgan::testing::read_bytes(b));
  }
}

TEST_F(CliRun, EvalRowsFollowValSplit) {
  const auto out = root() / "r.csv";
  ASSERT_EQ(run_cli({"eval", "--checkpoint", ckpt(), "--config", config().string(), "--out", out.string()}).code, 0);
  const auto lines = damgan::testing::read_lines(out);
  const auto ids = data::read_manifest(data_dir() / "manifest.tsv", 16).paths(data::Split::val);
  for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(lines[i + 1].substr(0, ids[i].size() + 1), ids[i] + ",");
}

TEST_F(CliRun, EvalCorruptCheckpointExitsTwo) {
  auto bytes = damgan::testing::read_bytes(ckpt());
  bytes[bytes.size() - 3] ^= 0x10;
  const auto bad = root() / "bad.ckpt";
  std::ofstream(bad, std::ios::binary) << bytes;
  const auto r = run_cli({"eval", "--checkpoint", bad.string(), "--config", config().string(), "--out", (root() / "x.csv").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("checkpoint integrity failure"), std::string::npos) << r.err;
}

TEST_F(CliRun, EvalEmptyValSplitExitsTwo) {
  const auto tsv = root() / "trainonly.tsv";
  ASSERT_EQ(run_cli({"prepare", "--data-root", data_dir().string(), "--val-fraction", "0", "--out", tsv.string()}).code, 0);
  const auto r = run_cli({"eval", "--checkpoint", ckpt(), "--data-root", data_dir().string(), "--manifest", tsv.string(), "--out",
                      (root() / "x.csv").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("empty"), std::string::npos) << r.err;
}

TEST_F(CliRun, EvalRejectsUnknownMask) {
  EXPECT_EQ(run_cli({"eval", "--checkpoint", ckpt(), "--config", config().string(), "--mask", "square", "--out",
                 (root() / "x.csv").string()}).code,
            2);
}

TEST_F(CliRun, InpaintWritesTriplet) {
  const auto out = root() / "inpaint";
  const auto r = run_cli({"inpaint", "--checkpoint", ckpt(), "--image", (data_dir() / "img_004.png").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"masked.png", "raw.png", "composited.png"}) EXPECT_EQ(damgan::testing::check_png(out / f, 16, 16), "");
}

TEST_F(CliRun, InpaintCompositeKeepsKnownPixels) {
  const auto out = root() / "inpaint";
  ASSERT_EQ(run_cli({"inpaint", "--checkpoint", ckpt(), "--image", (data_dir() / "img_004.png").string(), "--out", out.string()}).code, 0);
  const cv::Mat masked = cv::imread((out / "masked.png").string());
  const cv::Mat comp = cv::imread((out / "composited.png").string());
  // Center mask at 16 with center_size 8 covers [4,12).
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const bool hole = y >= 4 && y < 12 && x >= 4 && x < 12;
      if (!hole) EXPECT_EQ(masked.at<cv::Vec3b>(y, x), comp.at<cv::Vec3b>(y, x)) << y << "," << x;
    }
}

TEST_F(CliRun, InpaintWithMaskFile) {
  data::Mask m({1, 1, 16, 16});
  for (Index y = 2; y < 6; ++y)
    for (Index x = 3; x < 9; ++x) m(0, 0, y, x) = 1.0f;
  cv::Mat img(16, 16, CV_8UC1, cv::Scalar(0));
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) img.at<std::uint8_t>(y, x) = m(0, 0, y, x) > 0 ? 255 : 0;
  cv::imwrite((root() / "mask.png").string(), img);
  const auto loaded = data::load_mask(root() / "mask.png");
  ASSERT_EQ(loaded.shape(), m.shape());
  for (Index y = 0; y < 16; ++y)
    for (Index x = 0; x < 16; ++x) EXPECT_EQ(loaded(0, 0, y, x), m(0, 0, y, x));

  const auto out = root() / "with_mask";
  const auto r = run_cli({"inpaint", "--checkpoint", ckpt(), "--image", (data_dir() / "img_001.png").string(), "--mask-file",
                      (root() / "mask.png").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const cv::Mat masked = cv::imread((out / "masked.png").string());
  EXPECT_EQ(masked.at<cv::Vec3b>(3, 5), cv::Vec3b(0, 0, 0));
}

TEST_F(CliRun, InpaintWrongSizeMaskExitsTwo) {
  cv::imwrite((root() / "big.png").string(), cv::Mat(20, 16, CV_8UC1, cv::Scalar(255)));
  const auto r = run_cli({"inpaint", "--checkpoint", ckpt(), "--image", (data_dir() / "img_001.png").string(), "--mask-file",
                      (root() / "big.png").string(), "--out", (root() / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("expected 16x16"), std::string::npos) << r.err;
}

TEST_F(CliRun, InpaintIsDeterministic) {
  for (const char* d : {"d1", "d2"}) {
    ASSERT_EQ(run_cli({"inpaint", "--checkpoint", ckpt(), "--image", (data_dir() / "img_009.png").string(), "--mask", "free",
                   "--seed", "5", "--out", (root() / d).string()}).code,
              0);
  }
  for (const char* f : {"masked.png", "raw.png", "composited.png"}) {
    EXPECT_EQ(damgan::testing::read_bytes(root() / "d1" / f), damgan::testing::read_bytes(root() / "d2" / f));
  }
}

TEST_F(CliRun, GridLayout) {
  const auto three = root() / "g3.png";
  const auto one = root() / "g1.png";
  ASSERT_EQ(run_cli({"grid", "--checkpoint", ckpt(), "--config", config().string(), "--ids",
                 "img_000.png,img_005.png,img_017.png", "--out", three.string()}).code,
            0);
  ASSERT_EQ(run_cli({"grid", "--checkpoint", ckpt(), "--config", config().string(), "--ids", "img_005.png", "--out",
                 one.string()}).code,
            0);
  EXPECT_EQ(damgan::testing::check_png(three, 48, 48), "");
  EXPECT_EQ(damgan::testing::check_png(one, 48, 16), "");
  // Row 1 of the 3-row grid is the single-row grid.
  const cv::Mat g3 = cv::imread(three.string()), g1 = cv::imread(one.string());
  EXPECT_EQ(cv::norm(g3(cv::Rect(0, 16, 48, 16)), g1, cv::NORM_INF), 0.0);
  // The first column is the ground truth at model resolution.
  const auto gt = data::load_image(data_dir() / "img_005.png", 16);
  EXPECT_EQ(g1.at<cv::Vec3b>(3, 7)[2], data::quantize(gt(0, 0, 3, 7)));
}

TEST_F(CliRun, GridUnknownIdListed) {
  const auto r = run_cli({"grid", "--checkpoint", ckpt(), "--config", config().string(), "--ids", "img_000.png,ghost.png",
                      "--out", (root() / "g.png").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("ghost.png"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.find("img_000.png"), std::string::npos);
}
