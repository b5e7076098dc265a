#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "anml/config.hpp"
#include "anml/fetch.hpp"

using namespace anml;
namespace fs = std::filesystem;

#ifndef ANML_CLI_PATH
#define ANML_CLI_PATH "anml"
#endif

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("anml_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ANML_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<unsigned char> png_bytes(uint32_t salt) {
    Image img;
    img.height = 6;
    img.width = 6;
    img.pixels.resize(36);
    std::mt19937 rng(salt);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (auto& v : img.pixels) v = dist(rng);
    const fs::path tmp = fs::temp_directory_path() / ("anml_png_" + std::to_string(salt) + ".png");
    write_png_gray(tmp, img);
    std::ifstream f(tmp, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    fs::remove(tmp);
    return bytes;
}

// Fixture archives shaped like the real ones: a wrapping top directory with
// alphabet/character/instance.png inside.
void build_archive(const fs::path& zip_path, const std::string& top,
                   const std::vector<std::string>& alphabets, uint32_t salt) {
    std::vector<ZipEntry> entries;
    for (const auto& alphabet : alphabets)
        for (int ch = 0; ch < 1; ++ch)
            for (int inst = 0; inst < 2; ++inst) {
                ZipEntry e;
                e.name = top + "/" + alphabet + "/character0" + std::to_string(ch) + "/" +
                         std::to_string(inst) + ".png";
                e.data = png_bytes(salt + static_cast<uint32_t>(ch * 31 + inst));
                entries.push_back(std::move(e));
            }
    write_zip_stored(zip_path, entries);
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
    RunConfig cfg;
    EXPECT_EQ(cfg.get("profile"), "desk");
    EXPECT_EQ(cfg.get_int("inner_steps"), 20);
    EXPECT_EQ(cfg.get_int("remember_size"), 64);
    EXPECT_DOUBLE_EQ(cfg.get_real("beta"), 0.1);
    cfg.set("beta", "0.05");
    EXPECT_DOUBLE_EQ(cfg.get_real("beta"), 0.05);
    EXPECT_TRUE(cfg.was_set("beta"));
    EXPECT_FALSE(cfg.was_set("alpha"));
}

TEST(Config, UnknownKeyRejectedByName) {
    RunConfig cfg;
    try {
        cfg.set("warp_speed", "9");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("warp_speed"), std::string::npos);
    }
    EXPECT_THROW(cfg.get("warp_speed"), ConfigError);
}

TEST(Config, ListsAndBooleans) {
    RunConfig cfg;
    cfg.set("metatest_lengths", "10, 50,75");
    EXPECT_EQ(cfg.get_int_list("metatest_lengths"), (std::vector<int64_t>{10, 50, 75}));
    cfg.set("metatest_betas", "0.01,0.1");
    EXPECT_EQ(cfg.get_real_list("metatest_betas"), (std::vector<double>{0.01, 0.1}));
    cfg.set("audit", "false");
    EXPECT_FALSE(cfg.get_bool("audit"));
    cfg.set("audit", "maybe");
    EXPECT_THROW(cfg.get_bool("audit"), ConfigError);
    cfg.set("iterations", "12x");
    EXPECT_THROW(cfg.get_int("iterations"), ConfigError);
}

TEST(Config, FileLoadingAndSnapshotRoundTrip) {
    auto dir = temp_dir("config");
    {
        std::ofstream f(dir / "run.cfg");
        f << "# experiment\n";
        f << "profile = desk\n";
        f << "beta = 0.03   # inner lr\n";
        f << "\n";
        f << "treatment = OML\n";
    }
    RunConfig cfg;
    cfg.load_file(dir / "run.cfg");
    EXPECT_DOUBLE_EQ(cfg.get_real("beta"), 0.03);
    EXPECT_EQ(cfg.get("treatment"), "OML");

    cfg.save_snapshot(dir / "config.snapshot");
    RunConfig replay;
    replay.load_file(dir / "config.snapshot");
    EXPECT_EQ(replay.snapshot(), cfg.snapshot());

    {
        std::ofstream f(dir / "bad.cfg");
        f << "no_equals_sign_here\n";
    }
    RunConfig bad;
    EXPECT_THROW(bad.load_file(dir / "bad.cfg"), ConfigError);
    fs::remove_all(dir);
}

TEST(Fetch, FileUrlDownloadExtractValidate) {
    auto dir = temp_dir("fetch");
    build_archive(dir / "images_background.zip", "images_background", {"Alpha", "Beta"}, 1);
    build_archive(dir / "images_evaluation.zip", "images_evaluation", {"Gamma", "Delta"}, 2);

    FetchOptions opts;
    opts.base_url = "file://" + (dir).string();
    opts.expected_classes = 4;
    const fs::path root = dir / "root";

    auto report = fetch_omniglot(root, opts);
    EXPECT_FALSE(report.already_present);
    EXPECT_EQ(report.classes_found, 4);
    EXPECT_TRUE(fs::exists(root / "Alpha" / "character00" / "0.png"));
    EXPECT_TRUE(fs::exists(root / "Gamma" / "character00" / "1.png"));

    // Second invocation: tree already valid, nothing downloaded.
    auto again = fetch_omniglot(root, opts);
    EXPECT_TRUE(again.already_present);

    FetchOptions offline = opts;
    offline.offline = true;
    EXPECT_TRUE(fetch_omniglot(root, offline).already_present);
    EXPECT_THROW(fetch_omniglot(dir / "missing", offline), DataError);
    fs::remove_all(dir);
}

TEST(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("meta-train --set nonsense=1"), 3);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("meta-test"), 3);  // checkpoint required
}

TEST(Cli, TrainTestAnalyzeChain) {
    auto dir = temp_dir("chain");
    const std::string common =
        " --set inner_steps=3 --set remember_size=8 --set synthetic_classes=8 "
        "--set synthetic_test_classes=5 --seed 11";
    ASSERT_EQ(run_cli("meta-train --out " + (dir / "train").string() +
                      " --set iterations=4 --set checkpoint_every=2" + common),
              0);
    EXPECT_TRUE(fs::exists(dir / "train" / "metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / "train" / "config.snapshot"));
    EXPECT_TRUE(fs::exists(dir / "train" / "ckpt" / "iter-000002" / "manifest.txt"));
    {
        std::ifstream f(dir / "train" / "metrics.csv");
        std::string line;
        int rows = -1;  // header
        while (std::getline(f, line)) ++rows;
        EXPECT_EQ(rows, 4);  // one row per outer iteration
    }

    const std::string ckpt = (dir / "train" / "ckpt" / "final").string();
    ASSERT_EQ(run_cli("meta-test --checkpoint " + ckpt + " --out " + (dir / "test").string() +
                      " --set metatest_lengths=3 --set metatest_seeds=1,2 "
                      "--set metatest_betas=0.01" +
                      common),
              0);
    {
        std::ifstream f(dir / "test" / "reports" / "aggregate.csv");
        std::string line;
        int rows = -1;
        while (std::getline(f, line)) ++rows;
        EXPECT_EQ(rows, 2);  // one cell per seed
    }
    EXPECT_TRUE(fs::exists(dir / "test" / "reports" / "cell-ANML-n3-s1-seq.json"));

    ASSERT_EQ(run_cli("analyze --checkpoint " + ckpt + " --out " + (dir / "an").string() + common),
              0);
    EXPECT_TRUE(fs::exists(dir / "an" / "reports" / "stats.txt"));
    EXPECT_TRUE(fs::exists(dir / "an" / "reports" / "activations_test.csv"));

    // An OML checkpoint cannot serve ANML treatments.
    ASSERT_EQ(run_cli("meta-train --treatment OML --out " + (dir / "oml").string() +
                      " --set iterations=2 --set checkpoint_every=0" + common),
              0);
    EXPECT_EQ(run_cli("meta-test --checkpoint " + (dir / "oml" / "ckpt" / "final").string() +
                      " --out " + (dir / "bad").string() +
                      " --set metatest_lengths=2 --set metatest_seeds=1 --set metatest_betas=0.01" +
                      common),
              7);  // E_CHECKPOINT: arch mismatch against default ANML treatment
    fs::remove_all(dir);
}

TEST(Cli, OmlCheckpointLacksNmParameters) {
    auto dir = temp_dir("omlck");
    ASSERT_EQ(run_cli("meta-train --treatment OML --out " + (dir / "run").string() +
                      " --set iterations=2 --set inner_steps=2 --set remember_size=4 "
                      "--set synthetic_classes=6 --set checkpoint_every=0 --seed 4"),
              0);
    std::ifstream manifest(dir / "run" / "ckpt" / "final" / "manifest.txt");
    std::string text((std::istreambuf_iterator<char>(manifest)), std::istreambuf_iterator<char>());
    EXPECT_EQ(text.find("nm."), std::string::npos);
    EXPECT_NE(text.find("rln."), std::string::npos);
    fs::remove_all(dir);
}
