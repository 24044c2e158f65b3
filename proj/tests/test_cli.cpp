#include <doctest.h>

#include "cli.hpp"
#include "output.hpp"
#include "run_config.hpp"

#include "critdiff/errors.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace critdiff;
using namespace critdiff::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "critdiff");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("critdiff_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("config parsing, canonical form and round trip") {
    const RunConfig c = RunConfig::parse(
        "# comment\n[run]\nseed = 7\n\n[sde]\neps = 0.2   # inline\nn_traj = 500\nsnapshot_lambda2 = 2,3.5\n"
        "mode = exp\nzero_c02 = yes\n");
    CHECK(c.real("sde", "eps") == 0.2);
    CHECK(c.integer("sde", "n_traj") == 500);
    CHECK(c.integer("sde", "n_steps") == 400);
    CHECK(c.reals("sde", "snapshot_lambda2") == std::vector<double>{2.0, 3.5});
    CHECK(c.boolean("sde", "zero_c02"));
    CHECK(c.text("sde", "mode") == "exp");
    CHECK(c.seed("run", "seed") == 7);
    const RunConfig back = RunConfig::parse(c.serialize());
    CHECK(back == c);
    CHECK(back.serialize() == c.serialize());
    CHECK(back.hash() == c.hash());
    CHECK(c.serialize().find("eps = 0.20000000000000001") != std::string::npos);

    const RunConfig d = RunConfig::load("default");
    CHECK(RunConfig::parse(d.serialize()) == d);
    CHECK(d.seed("run", "seed") == 20240917);
}

TEST_CASE("config rejects unknown keys, bad values and missing required keys") {
    CHECK_THROWS_AS(RunConfig::parse("[sde]\nepsilon = 0.2\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse("[nope]\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse("eps = 0.2\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse("[sde]\neps = abc\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse("[sde]\neps = -1\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse("[sde]\neps = 0.2\neps = 0.3\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse("[sde]\nmode = fast\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse("[sde]\nn_traj = 1.5\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse("[sde\n"), ValidationError);
    const RunConfig c = RunConfig::parse("[sde]\nn_traj = 10\n");
    try {
        (void)c.real("sde", "eps");
        FAIL("expected a missing-key error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("eps") != std::string::npos);
    }
}

TEST_CASE("CSV formatting uses 17 significant digits and writes atomically") {
    Table t{{"a", "b"}, {}};
    t.add({0.1, 1.0 / 3.0});
    CHECK(t.to_csv() == "a,b\n0.10000000000000001,0.33333333333333331\n");
    CHECK_THROWS_AS(t.add({1.0}), ValidationError);
    const fs::path dir = scratch("atomic");
    const std::string path = emit_table(dir.string(), "x", t, {{"k", 1}});
    CHECK(slurp(path) == t.to_csv());
    CHECK(fs::exists(path + ".json"));
    for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().string().find(".tmp") == std::string::npos);
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("codes");
    CHECK(run({}).code == 1);
    CHECK(run({"bogus", "--config", "default"}).code == 1);
    CHECK(run({"sde-run"}).code == 1);
    CHECK(run({"sde-run", "--config", (dir / "missing.cfg").string()}).code == 1);

    const Run missing = run({"sde-run", "--config", write_config(dir, "[sde]\nn_traj = 10\n"), "--out", dir.string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("eps") != std::string::npos);

    const Run zero = run({"sde-run", "--config", write_config(dir, "[sde]\neps = 0.2\nn_traj = 0\n"), "--out",
                          dir.string()});
    CHECK(zero.code == 1);
    CHECK(zero.err.find("n_traj") != std::string::npos);

    const Run bad_tail = run({"tail-check", "--config", write_config(dir, "[tail]\neps = 0.2\n"), "--tau", "-1",
                              "--out", dir.string()});
    CHECK(bad_tail.code == 1);
    CHECK(bad_tail.err.find("tau") != std::string::npos);

    const Run stalled = run({"corrector-run", "--config",
                             write_config(dir, "[corrector]\neps = 0.4\nn = 64\nL = 4\nn_samples = 2\nmax_iter = 1\n"
                                               "tol = 1e-14\n"),
                             "--out", dir.string()});
    CHECK(stalled.code == 2);
    CHECK(stalled.err.find("corrector") != std::string::npos);
}

TEST_CASE("sde-run output is byte identical across thread counts and has a sidecar") {
    const fs::path dir = scratch("sde");
    const std::string cfg =
        write_config(dir, "[sde]\neps = 0.3\nlambda2_max = 2\nn_steps = 40\nn_traj = 3000\nrecord_every = 10\n");
    const Run a = run({"sde-run", "--config", cfg, "--out", (dir / "a").string(), "--threads", "1", "--seed", "3"});
    const Run b = run({"sde-run", "--config", cfg, "--out", (dir / "b").string(), "--threads", "3", "--seed", "3"});
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    const std::string csv = slurp(dir / "a" / "sde_moments.csv");
    CHECK(csv == slurp(dir / "b" / "sde_moments.csv"));
    CHECK(csv.rfind("lambda2,lnL,E_phi2_resc", 0) == 0);
    std::istringstream lines(csv);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == 1 + 5);
    const std::string meta = slurp(dir / "a" / "sde_moments.csv.json");
    for (const char* key : {"config_hash", "wall_seconds", "critdiff_version", "compiler"})
        CHECK(meta.find(key) != std::string::npos);

    const Run c = run({"sde-run", "--config", cfg, "--out", (dir / "c").string(), "--seed", "4"});
    REQUIRE(c.code == 0);
    CHECK(slurp(dir / "c" / "sde_moments.csv") != csv);
}

TEST_CASE("other subcommands run on small configs") {
    const fs::path dir = scratch("small");
    const std::string cfg = write_config(dir,
                                         "[qv]\nsamples = 200\nfield = false\n"
                                         "[ode]\neps = 0.3\nx_end = 2\nn_points = 21\n"
                                         "[tail]\neps = 0.3\nlambda2 = 4\nn_steps = 60\nn_traj = 2000\n"
                                         "[field]\neps = 0.5\nn = 64\nL_max = 4\nn_samples = 2\nsnapshot = true\n"
                                         "[corrector]\neps = 0.2\nn = 64\nL = 4\nn_samples = 2\n"
                                         "[particle]\neps = 0.4\nn = 128\nL = 8\ntimes = 1, 2\nn_paths = 200\n");
    for (const char* cmd : {"qv-check", "ode-run", "tail-check", "field-run", "corrector-run", "particle-run"}) {
        const Run r = run({cmd, "--config", cfg, "--out", dir.string()});
        CHECK_MESSAGE(r.code == 0, cmd << ": " << r.err);
    }
    for (const char* f : {"qv_identities.csv", "qv_covariance.csv", "ode_moments.csv", "tail_report.csv",
                          "field_moments.csv", "field_state.bin", "corrector.csv", "particle_msd.csv"})
        CHECK_MESSAGE(fs::exists(dir / f), f);
    const Run profile = run({"tail-check", "--config", cfg, "--out", dir.string(), "--tau", "4", "--sigma-hat", "-1"});
    CHECK(profile.code == 0);
    CHECK(fs::exists(dir / "tail_profile.csv"));
    CHECK(fs::exists(dir / "tail_bounds.csv"));
}

TEST_CASE("accept emits a flat JSON summary") {
    const fs::path dir = scratch("accept");
    const std::string cfg = write_config(dir, "[run]\nseed = 5\n[accept]\nonly = 1, 4\n");
    const Run r = run({"accept", "--config", cfg, "--out", dir.string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("PASS [ 1]") != std::string::npos);
    const std::string json = slurp(dir / "acceptance.json");
    CHECK(json.find("\"c01\"") != std::string::npos);
    CHECK(json.find("\"c04.a_ratio\"") != std::string::npos);
    CHECK(json.find("\"threshold\"") != std::string::npos);
    CHECK(json.find("\"c02\"") == std::string::npos);
}
