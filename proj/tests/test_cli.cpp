#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hiq/colorrec.hpp"
#include "hiq/common.hpp"

namespace fs = std::filesystem;

namespace {

// The binary under test comes from the build via the HIQ_CLI environment
// variable so the suite works regardless of build directory layout.
std::string cli() {
    const char* p = std::getenv("HIQ_CLI");
    REQUIRE(p != nullptr);
    return p;
}

struct RunResult {
    int rc;
    std::string out;
    std::string err;
};

RunResult run(const std::string& args) {
    static int n = 0;
    std::string so = "/tmp/hiq_cli_out_" + std::to_string(n) + ".txt";
    std::string se = "/tmp/hiq_cli_err_" + std::to_string(n) + ".txt";
    ++n;
    int status = std::system((cli() + " " + args + " >" + so + " 2>" + se).c_str());
    auto slurp = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };
    RunResult r{WEXITSTATUS(status), slurp(so), slurp(se)};
    fs::remove(so);
    fs::remove(se);
    return r;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::path("/tmp") / ("hiq_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
    static inline int counter = 0;
};

void write_file(const std::string& path, const std::string& data) {
    std::ofstream os(path, std::ios::binary);
    os << data;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

bool dirs_identical(const fs::path& a, const fs::path& b) {
    std::vector<std::string> na, nb;
    for (auto& e : fs::directory_iterator(a)) na.push_back(e.path().filename().string());
    for (auto& e : fs::directory_iterator(b)) nb.push_back(e.path().filename().string());
    std::sort(na.begin(), na.end());
    std::sort(nb.begin(), nb.end());
    if (na != nb) return false;
    for (const auto& name : na)
        if (read_file((a / name).string()) != read_file((b / name).string())) return false;
    return true;
}

}  // namespace

TEST_CASE("help exits cleanly and unknown flags are usage errors", "[cli]") {
    REQUIRE(run("--help").rc == 0);
    REQUIRE(run("encode --help").rc == 0);
    REQUIRE(run("--definitely-not-a-flag").rc == 2);
    REQUIRE(run("encode --bogus").rc == 2);
    REQUIRE(run("").rc == 2);  // a subcommand is required
}

TEST_CASE("encode, render, decode round trip", "[cli]") {
    TempDir d;
    std::string payload(1234, '\0');
    for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = char(37 * i + 11);
    write_file(d / "pay.bin", payload);

    REQUIRE(run("encode --in " + (d / "pay.bin") + " --out " + (d / "sym.txt") + " --layers 3 --ec M").rc == 0);
    REQUIRE(read_file(d / "sym.txt").rfind("HIQSYM 1", 0) == 0);
    REQUIRE(run("render --in " + (d / "sym.txt") + " --out " + (d / "img.ppm") + " --module-px 4").rc == 0);

    // Train a model on a small matching corpus, then decode the render.
    REQUIRE(run("corpus --out " + (d / "corp") + " --count 4 --version 2 --layers 3 --alpha-min 0.9 --seed 11").rc ==
            0);
    REQUIRE(run("train --corpus " + (d / "corp") + " --out " + (d / "model.txt") +
                " --algo qda --augment 0 --max-samples 6000")
                .rc == 0);

    RunResult dec = run("decode --in " + (d / "img.ppm") + " --model " + (d / "model.txt") + " --dump-bits " +
                        (d / "bits.pbm"));
    REQUIRE(dec.rc == 0);
    REQUIRE(dec.out == payload);  // payload goes to stdout byte-for-byte
    REQUIRE(read_file(d / "bits.pbm").rfind("P1", 0) == 0);
}

TEST_CASE("capacity limits and the capacity table", "[cli]") {
    TempDir d;
    write_file(d / "fits.bin", std::string(8859, 'a'));
    write_file(d / "over.bin", std::string(8860, 'a'));

    REQUIRE(run("encode --in " + (d / "fits.bin") + " --out " + (d / "s.txt") + " --layers 3 --ec L --version 40")
                .rc == 0);

    RunResult over =
        run("encode --in " + (d / "over.bin") + " --out " + (d / "s2.txt") + " --layers 3 --ec L --version 40");
    REQUIRE(over.rc == 3);
    REQUIRE(over.err.find("capacity") != std::string::npos);
    REQUIRE(over.err.find("8859") != std::string::npos);  // the table names the L limit
    REQUIRE(!fs::exists(d / "s2.txt"));
}

TEST_CASE("corpus synthesis is deterministic in flags and seed", "[cli]") {
    TempDir d;
    std::string flags = " --count 3 --version 2 --layers 2 --noise 0.01 --warp-jitter 0.5 --seed 42";
    REQUIRE(run("corpus --out " + (d / "a") + flags).rc == 0);
    REQUIRE(run("corpus --out " + (d / "b") + flags).rc == 0);
    REQUIRE(run("corpus --out " + (d / "c") + " --count 3 --version 2 --layers 2 --noise 0.01 --warp-jitter 0.5"
                " --seed 43")
                .rc == 0);
    REQUIRE(dirs_identical(d.path / "a", d.path / "b"));
    REQUIRE(!dirs_identical(d.path / "a", d.path / "c"));
    REQUIRE(fs::exists(d.path / "a" / "spec.json"));
    REQUIRE(fs::exists(d.path / "a" / "manifest.jsonl"));
}

TEST_CASE("trained models reload exactly", "[cli]") {
    TempDir d;
    REQUIRE(run("corpus --out " + (d / "corp") + " --count 4 --version 2 --layers 2 --alpha-min 0.8 --noise 0.01"
                " --seed 5")
                .rc == 0);
    REQUIRE(run("train --corpus " + (d / "corp") + " --out " + (d / "m.txt") +
                " --algo qda-cmi --max-iters 6 --pgd-steps 40 --augment 2 --max-samples 4000 --seed 5")
                .rc == 0);

    std::ifstream is(d / "m.txt");
    hiq::ColorModel m = hiq::load_model(is);
    REQUIRE(m.kind == hiq::ColorModel::Kind::qda_cmi);
    REQUIRE(m.qda.n_layers == 2);
    std::stringstream round;
    hiq::save_model(m, round);
    REQUIRE(round.str() == read_file(d / "m.txt"));

    // Training twice with the same seed is byte-identical.
    REQUIRE(run("train --corpus " + (d / "corp") + " --out " + (d / "m2.txt") +
                " --algo qda-cmi --max-iters 6 --pgd-steps 40 --augment 2 --max-samples 4000 --seed 5")
                .rc == 0);
    REQUIRE(read_file(d / "m.txt") == read_file(d / "m2.txt"));
}

TEST_CASE("bench writes the report and enforces assertions", "[cli]") {
    TempDir d;
    REQUIRE(run("corpus --out " + (d / "corp") + " --count 4 --version 2 --layers 2 --alpha-min 0.9 --seed 8").rc ==
            0);
    REQUIRE(run("train --corpus " + (d / "corp") + " --out " + (d / "m.txt") + " --algo qda --augment 0").rc == 0);

    RunResult bench =
        run("bench --corpus " + (d / "corp") + " --model " + (d / "m.txt") + " --ablate rgt,rand --out " +
            (d / "report.csv"));
    REQUIRE(bench.rc == 0);
    std::stringstream csv(read_file(d / "report.csv"));
    std::string line;
    std::getline(csv, line);
    REQUIRE(line == "classifier,preset,ber,dfr,frames_mean,ppf");
    int rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) {
            ++rows;
            REQUIRE(line.rfind("qda,", 0) == 0);
        }
    REQUIRE(rows == 3);  // default, default+4pt, default+norand

    write_file(d / "ok.assert", "max_ber 0.2\nmax_dfr 0.5\n");
    write_file(d / "strict.assert", "max_ppf -1\n");
    REQUIRE(run("bench --corpus " + (d / "corp") + " --model " + (d / "m.txt") + " --assert " + (d / "ok.assert"))
                .rc == 0);
    RunResult failed =
        run("bench --corpus " + (d / "corp") + " --model " + (d / "m.txt") + " --assert " + (d / "strict.assert"));
    REQUIRE(failed.rc == 4);
    REQUIRE(failed.err.find("assertion failed") != std::string::npos);
}

TEST_CASE("missing inputs are data errors that name the path", "[cli]") {
    TempDir d;
    write_file(d / "img.ppm", "P6\n4 4\n255\n" + std::string(48, '\xff'));
    RunResult r = run("decode --in " + (d / "img.ppm") + " --model " + (d / "no_such_model.txt"));
    REQUIRE(r.rc == 3);
    REQUIRE(r.err.find("no_such_model.txt") != std::string::npos);
    REQUIRE(run("render --in " + (d / "no_such_symbol.txt") + " --out " + (d / "x.ppm")).rc == 3);
}

TEST_CASE("config file values are overridden by flags", "[cli]") {
    TempDir d;
    write_file(d / "cfg.ini", "seed=5\n");
    std::string flags = " --count 2 --version 2 --layers 2 --noise 0.01";
    REQUIRE(run("corpus --config " + (d / "cfg.ini") + " --out " + (d / "a") + flags).rc == 0);
    REQUIRE(run("corpus --out " + (d / "b") + flags + " --seed 5").rc == 0);
    REQUIRE(run("corpus --config " + (d / "cfg.ini") + " --out " + (d / "c") + flags + " --seed 9").rc == 0);
    REQUIRE(run("corpus --out " + (d / "e") + flags + " --seed 9").rc == 0);
    REQUIRE(dirs_identical(d.path / "a", d.path / "b"));  // config supplies the seed
    REQUIRE(dirs_identical(d.path / "c", d.path / "e"));  // flag beats config
    REQUIRE(!dirs_identical(d.path / "a", d.path / "c"));
}
