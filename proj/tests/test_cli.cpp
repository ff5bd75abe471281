#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "test_support.hpp"

using hypdr::testing::fixture;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
};

Outcome cli(const std::string& args)
{
    std::string cmd = std::string(HYPDR_CLI) + " " + args + " 2>&1";
    Outcome o;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p)
        return o;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, p))
        o.out.append(buf, n);
    int status = pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

struct Cli : ::testing::Test {
    fs::path dir;
    void SetUp() override
    {
        dir = fs::temp_directory_path() /
              ("hypdr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::vector<std::string> lines(const std::string& file)
{
    std::ifstream in(file);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);)
        out.push_back(l);
    return out;
}

}  // namespace

TEST_F(Cli, VerifyValidExitsZero)
{
    auto o = cli("verify " + fixture("circle.hha") + " --result " + path("r.json"));
    EXPECT_EQ(o.code, 0) << o.out;
    EXPECT_NE(o.out.find("valid"), std::string::npos);
    std::ifstream in(path("r.json"));
    auto j = nlohmann::json::parse(in);
    EXPECT_EQ(j["status"], "valid");
}

TEST_F(Cli, VerifyModelExitsTen)
{
    auto o = cli("verify " + fixture("circle.hha") + " --init-formula 'x <= 0.5' -q");
    EXPECT_EQ(o.code, 10) << o.out;
    EXPECT_NE(o.out.find("model"), std::string::npos);
}

TEST_F(Cli, DiscreteModelExitsTen)
{
    auto o = cli("verify " + fixture("sum.hha") + " --safe 'sum <= 5' --init-formula 'x = 3 & sum = 0' -q");
    EXPECT_EQ(o.code, 10) << o.out;
}

TEST_F(Cli, UsageErrorsExitTwo)
{
    EXPECT_EQ(cli("verify " + path("missing.hha")).code, 2);
    EXPECT_EQ(cli("verify " + fixture("bad_command.hha")).code, 2);
    EXPECT_EQ(cli("verify " + fixture("circle.hha") + " --safe 'z <= 1'").code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST_F(Cli, CheckInvariantVerdicts)
{
    auto ok = cli("check-invariant " + fixture("circle.hha") + " " + fixture("invariants/circle_origin.json"));
    EXPECT_EQ(ok.code, 0) << ok.out;
    auto bad = cli("check-invariant " + fixture("circle.hha") + " " + fixture("invariants/true.json"));
    EXPECT_EQ(bad.code, 1) << bad.out;
    EXPECT_NE(bad.out.find("does not imply the property"), std::string::npos);
}

TEST_F(Cli, ReplayReproducesLog)
{
    auto run = cli("verify " + fixture("circle.hha") + " -q --log " + path("s.jsonl"));
    ASSERT_EQ(run.code, 0) << run.out;
    auto recorded = lines(path("s.jsonl"));
    ASSERT_GT(recorded.size(), 2u);
    EXPECT_TRUE(nlohmann::json::parse(recorded.front()).contains("config"));

    auto replay = cli("replay " + fixture("circle.hha") + " " + path("s.jsonl"));
    EXPECT_EQ(replay.code, 0) << replay.out;
    EXPECT_NE(replay.out.find("replay identical"), std::string::npos);
}

TEST_F(Cli, TamperedLogReportsDivergence)
{
    ASSERT_EQ(cli("verify " + fixture("circle.hha") + " -q --log " + path("s.jsonl")).code, 0);
    auto recorded = lines(path("s.jsonl"));
    std::ofstream out(path("t.jsonl"));
    bool done = false;
    for (auto& l : recorded) {
        auto j = nlohmann::json::parse(l);
        if (!done && j.contains("answer")) {
            j["answer"][0]["psi"] = "x <= 0.9";
            done = true;
        }
        out << j.dump() << "\n";
    }
    out.close();
    ASSERT_TRUE(done);
    auto replay = cli("replay " + fixture("circle.hha") + " " + path("t.jsonl"));
    EXPECT_EQ(replay.code, 1) << replay.out;
    EXPECT_NE(replay.out.find("DivergenceAt("), std::string::npos);
}

TEST_F(Cli, EmptyLogIsUsageError)
{
    std::ofstream(path("e.jsonl")).close();
    EXPECT_EQ(cli("replay " + fixture("circle.hha") + " " + path("e.jsonl")).code, 2);
}

TEST_F(Cli, SimulatePrintsTrajectory)
{
    auto o = cli("simulate " + fixture("circle.hha") + " --location q0 --from x=1,y=0 --T 3");
    ASSERT_EQ(o.code, 0) << o.out;
    std::istringstream in(o.out);
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first, "0,1,0");
}
