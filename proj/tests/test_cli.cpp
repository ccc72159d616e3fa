#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "psnl/eval.hpp"
#include "psnl/model_io.hpp"
#include "psnl/shdi_matrix.hpp"
#include "psnl/text_format.hpp"
#include "support/subprocess.hpp"
#include "support/synthetic.hpp"

using namespace psnl;
using psnl::test::run_cli;
using psnl::test::slurp;
using psnl::test::spit;

namespace {

// Write a synthetic train/valid/test triple under dir and return the paths.
struct Dataset {
    std::string train, valid, test;
};

Dataset write_dataset(const std::string& dir, std::uint64_t seed) {
    const ShdiMatrix mat = test::make_synthetic(30, 3, 0.5, seed);
    const auto [tr, va, te] = test::split3(mat, 0.7, 0.15, seed);
    Dataset ds{dir + "/tr.tsv", dir + "/va.tsv", dir + "/te.tsv"};
    std::ostringstream a, b, c;
    write_tsv(a, tr);
    write_tsv(b, va);
    write_tsv(c, te);
    spit(ds.train, a.str());
    spit(ds.valid, b.str());
    spit(ds.test, c.str());
    return ds;
}

}  // namespace

TEST_CASE("cli: split writes ten balanced folds and a manifest") {
    const std::string dir = test::fresh_dir("split");
    const ShdiMatrix mat = test::make_random_instance(20, 0.5, 1);
    std::ostringstream edges;
    write_tsv(edges, mat);
    spit(dir + "/edges.tsv", edges.str());

    const auto r = run_cli("split --input " + dir + "/edges.tsv --seed 42 --out " + dir +
                           "/folds.tsv");
    REQUIRE(r.exit_code == 0);

    std::istringstream folds_in(slurp(dir + "/folds.tsv"));
    const FoldSplit folds = read_folds(folds_in, mat, 10);
    std::size_t total = 0, max_size = 0, min_size = SIZE_MAX;
    for (const auto& fold : folds.folds) {
        total += fold.size();
        max_size = std::max(max_size, fold.size());
        min_size = std::min(min_size, fold.size());
    }
    CHECK(total == mat.edges().size());
    CHECK(max_size - min_size <= 1);

    const auto manifest = nlohmann::json::parse(slurp(dir + "/folds.tsv.manifest.json"));
    CHECK(manifest["command"] == "split");
    CHECK(manifest["flags"]["seed"] == 42);

    // determinism: a second run produces byte-identical output
    const std::string first = slurp(dir + "/folds.tsv");
    REQUIRE(run_cli("split --input " + dir + "/edges.tsv --seed 42 --out " + dir +
                    "/folds2.tsv")
                .exit_code == 0);
    CHECK(slurp(dir + "/folds2.tsv") == first);
}

TEST_CASE("cli: train -> save -> load -> eval equals the in-memory run") {
    const std::string dir = test::fresh_dir("roundtrip");
    const Dataset ds = write_dataset(dir, 21);

    const std::string flags = " --rank 3 --max-iters 60 --seed 7 --lambda 0.01 --gamma 0.3 "
                              "--mu 0.1 --eta 1.0";
    const auto r = run_cli("train --train " + ds.train + " --valid " + ds.valid +
                           " --model " + dir + "/m.psnl" + flags);
    REQUIRE(r.exit_code == 0);

    // in-memory reference over the same inputs
    const auto mats = load_edges_shared({ds.train, ds.valid});
    TrainConfig cfg;
    cfg.rank = 3;
    cfg.max_iters = 60;
    cfg.seed = 7;
    const HyperParams hp{.lambda = 0.01, .gamma = 0.3, .mu = 0.1, .eta = 1.0};
    const auto [state, report] = train(mats[0], mats[1], hp, cfg);

    // CLI eval of the saved model vs library rmse on the same test edges
    const auto ev = run_cli("eval --model " + dir + "/m.psnl --test " + ds.test);
    REQUIRE(ev.exit_code == 0);

    const LoadedModel loaded = load_model_file(dir + "/m.psnl");
    std::ifstream te(ds.test);
    std::stringstream buf;
    buf << te.rdbuf();
    std::vector<Edge> truth;
    for (const RawEdge& raw : parse_raw(buf, EdgeFormat::Tsv)) {
        auto m = static_cast<std::uint32_t>(loaded.index_of(raw.a));
        auto n = static_cast<std::uint32_t>(loaded.index_of(raw.b));
        if (m > n) std::swap(m, n);
        truth.push_back({m, n, raw.y});
    }
    const double lib_rmse = rmse(truth, loaded.state);
    CHECK(ev.output == fmt_double(lib_rmse) + "\n");

    // the in-memory A and the round-tripped A agree bit for bit
    REQUIRE(loaded.state.A.size() == state.A.size());
    CHECK(loaded.state.A == state.A);
    CHECK(rmse(truth, state) == lib_rmse);
}

TEST_CASE("cli: manifest reruns reproduce the model byte for byte") {
    const std::string dir = test::fresh_dir("manifest");
    const Dataset ds = write_dataset(dir, 22);

    REQUIRE(run_cli("train --train " + ds.train + " --valid " + ds.valid + " --model " +
                    dir + "/m1.psnl --rank 3 --max-iters 40 --seed 3")
                .exit_code == 0);

    const auto manifest = nlohmann::json::parse(slurp(dir + "/m1.psnl.manifest.json"));
    CHECK(manifest["command"] == "train");
    const auto& flags = manifest["flags"];
    // every train flag is echoed, including untouched defaults
    for (const char* key :
         {"train", "valid", "model", "checkpoint", "rank", "max-iters", "tol", "seed",
          "init-scale", "ablate-proximal", "threads", "lambda", "gamma", "mu", "eta"})
        CHECK(flags.contains(key));
    CHECK(flags["rank"] == 3);
    CHECK(flags["tol"] == 1e-5);

    // rebuild the command line from the manifest alone
    std::string argv = "train";
    for (const auto& [key, value] : flags.items()) {
        if (key == "model") continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) argv += " --" + key;
            continue;
        }
        argv += " --" + key + " ";
        argv += value.is_string() ? value.get<std::string>() : value.dump();
    }
    argv += " --model " + dir + "/m2.psnl";
    REQUIRE(run_cli(argv).exit_code == 0);
    CHECK(slurp(dir + "/m2.psnl") == slurp(dir + "/m1.psnl"));
}

TEST_CASE("cli: checkpointed models restore X and W exactly") {
    const std::string dir = test::fresh_dir("checkpoint");
    const Dataset ds = write_dataset(dir, 23);
    // eta != 1 leaves nonzero multipliers behind whenever truncation fires
    const std::string flags = " --rank 3 --max-iters 30 --seed 5 --eta 0.5 --mu 0.2";
    REQUIRE(run_cli("train --train " + ds.train + " --valid " + ds.valid + " --model " +
                    dir + "/m.psnl" + flags + " --checkpoint")
                .exit_code == 0);

    const auto mats = load_edges_shared({ds.train, ds.valid});
    TrainConfig cfg;
    cfg.rank = 3;
    cfg.max_iters = 30;
    cfg.seed = 5;
    HyperParams hp;
    hp.eta = 0.5;
    hp.mu = 0.2;
    const auto [state, report] = train(mats[0], mats[1], hp, cfg);

    const LoadedModel model = load_model_file(dir + "/m.psnl");
    CHECK(model.has_checkpoint);
    CHECK(model.state.X == state.X);
    CHECK(model.state.W == state.W);
    CHECK(model.state.A == state.A);

    REQUIRE(run_cli("train --train " + ds.train + " --valid " + ds.valid + " --model " +
                    dir + "/plain.psnl" + flags)
                .exit_code == 0);
    CHECK(!load_model_file(dir + "/plain.psnl").has_checkpoint);
}

TEST_CASE("cli: predict resolves raw labels") {
    const std::string dir = test::fresh_dir("predict");
    const Dataset ds = write_dataset(dir, 24);
    REQUIRE(run_cli("train --train " + ds.train + " --valid " + ds.valid + " --model " +
                    dir + "/m.psnl --rank 3 --max-iters 30")
                .exit_code == 0);
    spit(dir + "/pairs.tsv", "0\t1\n2\t2\n");
    const auto r = run_cli("predict --model " + dir + "/m.psnl --pairs " + dir +
                           "/pairs.tsv");
    REQUIRE(r.exit_code == 0);
    std::istringstream lines(r.output);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
        const auto fields = split_fields(line);
        REQUIRE(fields.size() == 3);
        const auto v = parse_double(fields[2]);
        REQUIRE(v.has_value());
        CHECK(*v >= 0.0);
        ++rows;
    }
    CHECK(rows == 2);

    const auto bad = run_cli("predict --model " + dir + "/m.psnl --pairs /nonexistent.tsv");
    CHECK(bad.exit_code == 2);
}

TEST_CASE("cli: exit codes distinguish usage, data, and divergence errors") {
    const std::string dir = test::fresh_dir("exits");
    const Dataset ds = write_dataset(dir, 25);

    CHECK(run_cli("train --no-such-flag").exit_code == 1);
    CHECK(run_cli("bogus-command").exit_code == 1);
    CHECK(run_cli("train --train /missing.tsv --valid " + ds.valid + " --model " + dir +
                  "/m.psnl")
              .exit_code == 2);

    spit(dir + "/bad.tsv", "0\t1\t-3\n");
    const auto bad = run_cli("train --train " + dir + "/bad.tsv --valid " + ds.valid +
                             " --model " + dir + "/m.psnl");
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("line 1") != std::string::npos);

    const auto div = run_cli("train --train " + ds.train + " --valid " + ds.valid +
                             " --model " + dir + "/m.psnl --rank 3 --eta 64 --gamma 0.01");
    CHECK(div.exit_code == 3);

    CHECK(run_cli("train --train " + ds.train + " --valid " + ds.train + " --model " + dir +
                  "/m.psnl")
              .exit_code == 2);  // train/valid overlap
}

TEST_CASE("cli: tune writes a deterministic trial log and best point") {
    const std::string dir = test::fresh_dir("tune");
    const Dataset ds = write_dataset(dir, 26);
    const std::string flags = " --rank 3 --seed 9 --n-trials 6 --n-startup 3 "
                              "--trial-budget 15";
    REQUIRE(run_cli("tune --train " + ds.train + " --valid " + ds.valid + " --out " + dir +
                    "/best1.json --trial-log " + dir + "/t1.tsv" + flags)
                .exit_code == 0);
    REQUIRE(run_cli("tune --train " + ds.train + " --valid " + ds.valid + " --out " + dir +
                    "/best2.json --trial-log " + dir + "/t2.tsv" + flags)
                .exit_code == 0);
    CHECK(slurp(dir + "/t1.tsv") == slurp(dir + "/t2.tsv"));
    CHECK(slurp(dir + "/best1.json") == slurp(dir + "/best2.json"));

    const auto best = nlohmann::json::parse(slurp(dir + "/best1.json"));
    for (const char* key : {"lambda", "gamma", "mu", "eta", "b", "trial"})
        CHECK(best.contains(key));
}

TEST_CASE("cli: cv emits the documented csv and is deterministic without timing") {
    const std::string dir = test::fresh_dir("cv");
    const ShdiMatrix mat = test::make_synthetic(25, 3, 0.5, 27);
    std::ostringstream edges;
    write_tsv(edges, mat);
    spit(dir + "/edges.tsv", edges.str());

    const std::string flags = " --rank 3 --max-iters 25 --seed 2 --timing none";
    REQUIRE(run_cli("cv --input " + dir + "/edges.tsv --csv " + dir + "/a.csv" + flags)
                .exit_code == 0);
    REQUIRE(run_cli("cv --input " + dir + "/edges.tsv --csv " + dir + "/b.csv" + flags)
                .exit_code == 0);
    const std::string csv = slurp(dir + "/a.csv");
    CHECK(csv == slurp(dir + "/b.csv"));
    CHECK(csv.rfind("rotation,rmse,n_pairs,train_seconds,tune_seconds\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 13);  // header + 10 rotations + mean + std
}
