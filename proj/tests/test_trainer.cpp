#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "crae/checkpoint.hpp"
#include "crae/runconfig.hpp"
#include "crae/synth.hpp"
#include "crae/trainer.hpp"

using namespace crae;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "crae_trainer_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

struct Micro {
    Vocabulary vocab;
    TrainData data;
};

Micro micro_instance(uint64_t seed = 5) {
    SynthSpec spec;
    spec.clusters = 2;
    spec.users = 8;
    spec.items = 10;
    spec.vocab = 16;
    spec.min_len = 3;
    spec.max_len = 5;
    spec.min_pos = 3;
    spec.max_pos = 5;
    spec.seed = seed;
    const SynthData synth = make_synthetic(spec);
    Micro m;
    m.vocab = build_vocabulary(synth.docs, 1);
    m.data.sequences.resize(synth.docs.size());
    for (std::size_t j = 0; j < synth.docs.size(); ++j)
        m.data.sequences[j] = encode_document(synth.docs[j], m.vocab);
    m.data.ratings = synth.ratings;
    return m;
}

TrainConfig micro_config() {
    TrainConfig cfg;
    cfg.repr_dim = 4;
    cfg.state_dim = 8;
    cfg.epochs = 3;
    cfg.minibatch_size = 4;
    cfg.learning_rate = 0.05;
    cfg.denoise_rate = 0.3;
    cfg.lambda_s = 100.0;
    cfg.seed = 11;
    return cfg;
}

std::string render_logs(const std::vector<EpochLog>& logs) {
    std::ostringstream out;
    for (const auto& l : logs) out << format_log_line(l) << '\n';
    return out.str();
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("synthetic generator: shapes, determinism, cluster structure") {
    SynthSpec spec;  // acceptance-scale defaults
    const SynthData a = make_synthetic(spec);
    const SynthData b = make_synthetic(spec);
    CHECK(a.docs.size() == 60);
    CHECK(a.ratings.n_users == 50);
    CHECK(a.ratings.n_items == 60);
    CHECK(a.docs == b.docs);
    CHECK(a.ratings.user_items == b.ratings.user_items);

    std::set<std::string> tokens;
    for (std::size_t j = 0; j < a.docs.size(); ++j) {
        CHECK(a.docs[j].size() >= 4);
        CHECK(a.docs[j].size() <= 10);
        // items in the same cluster share a lead marker token
        CHECK(a.docs[j][0] == a.docs[j % 5][0]);
        for (const auto& t : a.docs[j]) tokens.insert(t);
    }
    CHECK(tokens.size() <= 80);
    for (int u = 0; u < 50; ++u) {
        const auto& pos = a.ratings.user_items[u];
        CHECK(pos.size() >= 8);
        CHECK(pos.size() <= 12);
        // affinity: most positives live in the user's own cluster
        int own = 0;
        for (int j : pos) own += (j % 5 == u % 5);
        CHECK(own * 2 > static_cast<int>(pos.size()));
    }
}

TEST_CASE("train: logs are finite, sized, and deterministic across runs") {
    const Micro m = micro_instance();
    const TrainConfig cfg = micro_config();

    std::ostringstream log1, log2;
    Model a = train(m.vocab, m.data, cfg, &log1);
    Model b = train(m.vocab, m.data, cfg, &log2);
    CHECK(log1.str() == log2.str());
    CHECK(a.epoch == 3);

    const auto pa = a.params.flatten();
    const auto pb = b.params.flatten();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);

    std::istringstream lines(log1.str());
    std::string line;
    int rows = 0;
    while (std::getline(lines, line))
        if (!line.empty() && line[0] != '#' && line[0] != 'e') ++rows;
    CHECK(rows == 3);
}

TEST_CASE("train: different seeds change the outcome") {
    const Micro m = micro_instance();
    TrainConfig cfg = micro_config();
    Model a = train(m.vocab, m.data, cfg, nullptr);
    cfg.seed = 12;
    Model b = train(m.vocab, m.data, cfg, nullptr);
    CHECK(a.params.flatten() != b.params.flatten());
}

TEST_CASE("joint objective improves in nearly every epoch on a small instance") {
    SynthSpec spec;
    spec.clusters = 4;
    spec.users = 20;
    spec.items = 24;
    spec.vocab = 40;
    spec.min_len = 3;
    spec.max_len = 6;
    spec.min_pos = 4;
    spec.max_pos = 7;
    spec.seed = 3;
    const SynthData synth = make_synthetic(spec);
    Micro m;
    m.vocab = build_vocabulary(synth.docs, 1);
    m.data.sequences.resize(synth.docs.size());
    for (std::size_t j = 0; j < synth.docs.size(); ++j)
        m.data.sequences[j] = encode_document(synth.docs[j], m.vocab);
    m.data.ratings = synth.ratings;

    TrainConfig cfg = micro_config();
    cfg.repr_dim = 6;
    cfg.state_dim = 12;
    cfg.epochs = 30;
    cfg.minibatch_size = 64;  // full-batch steps keep the trajectory smooth
    cfg.learning_rate = 0.03;
    cfg.denoise_rate = 0.2;
    cfg.resample_per_epoch = false;  // keep the gamma targets stable epoch to epoch
    Model model = init_model(m.vocab, m.data.ratings.n_users, m.data.ratings.n_items, cfg);
    const std::vector<EpochLog> logs = train_epochs(model, m.data, cfg.epochs, nullptr);
    int improved = 0;
    for (std::size_t e = 1; e < logs.size(); ++e)
        improved += logs[e].joint_objective > logs[e - 1].joint_objective;
    CHECK(improved >= static_cast<int>(0.9 * (logs.size() - 1)));
}

TEST_CASE("network phase does not increase its own loss at a small learning rate") {
    const Micro m = micro_instance(8);
    TrainConfig cfg = micro_config();
    cfg.learning_rate = 1e-3;
    cfg.epochs = 20;
    cfg.denoise_rate = 0.0;       // fixed inputs so epoch losses are comparable
    cfg.resample_per_epoch = false;
    Model model = init_model(m.vocab, m.data.ratings.n_users, m.data.ratings.n_items, cfg);
    const auto logs = train_epochs(model, m.data, cfg.epochs, nullptr);
    int non_increasing = 0;
    for (std::size_t e = 1; e < logs.size(); ++e)
        non_increasing += logs[e].recon_loss + logs[e].coupling_loss <=
                          logs[e - 1].recon_loss + logs[e - 1].coupling_loss + 1e-9;
    CHECK(non_increasing >= static_cast<int>(0.95 * (logs.size() - 1)));
}

TEST_CASE("two_step mode decouples the network phase from ratings") {
    const Micro m = micro_instance();
    TrainConfig cfg = micro_config();
    cfg.mode = TrainMode::two_step;
    std::ostringstream log;
    Model model = train(m.vocab, m.data, cfg, &log);
    std::istringstream lines(log.str());
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("epoch", 0) == 0) continue;
        std::istringstream cols(line);
        std::string epoch, recon, coupling;
        cols >> epoch >> recon >> coupling;
        CHECK(coupling == "0");
    }
}

TEST_CASE("lambda_s_inf mode degenerates the nonlinearities and is recorded") {
    const Micro m = micro_instance();
    TrainConfig cfg = micro_config();
    cfg.mode = TrainMode::lambda_s_inf;
    CHECK(log_header(cfg).find("mode=lambda_s_inf") != std::string::npos);
    Model model = train(m.vocab, m.data, cfg, nullptr);
    CHECK(std::isinf(model.params.encoder.lambda_s));
    CHECK(std::isinf(model.params.decoder.lambda_s));
}

TEST_CASE("parallel workers: same worker count reproduces bitwise") {
    const Micro m = micro_instance();
    TrainConfig cfg = micro_config();
    cfg.workers = 2;
    Model a = train(m.vocab, m.data, cfg, nullptr);
    Model b = train(m.vocab, m.data, cfg, nullptr);
    CHECK(a.params.flatten() == b.params.flatten());
}

TEST_CASE("checkpoint: bit-exact round trip") {
    const Micro m = micro_instance();
    TrainConfig cfg = micro_config();
    cfg.lambda_s = std::numeric_limits<double>::infinity();  // inf must survive the trip
    Model model = train(m.vocab, m.data, cfg, nullptr);
    const auto path = temp_path("model.crae");
    save_checkpoint(model, path.string());
    Model loaded = load_checkpoint(path.string());

    CHECK(loaded.epoch == model.epoch);
    CHECK(loaded.vocab.id_to_token == model.vocab.id_to_token);
    CHECK(loaded.vocab.wildcard_id == model.vocab.wildcard_id);
    CHECK(loaded.vocab.eos_id == model.vocab.eos_id);
    CHECK(loaded.config.seed == model.config.seed);
    CHECK(std::isinf(loaded.config.lambda_s));
    CHECK(loaded.rng.state() == model.rng.state());
    CHECK(loaded.params.flatten() == model.params.flatten());
    CHECK(loaded.factors.users == model.factors.users);
    CHECK(loaded.factors.items == model.factors.items);

    // a second save of the loaded model is byte-identical
    const auto path2 = temp_path("model2.crae");
    save_checkpoint(loaded, path2.string());
    CHECK(file_bytes(path) == file_bytes(path2));
}

TEST_CASE("checkpoint: truncation and corruption are rejected") {
    const Micro m = micro_instance();
    Model model = init_model(m.vocab, m.data.ratings.n_users, m.data.ratings.n_items,
                             micro_config());
    const auto path = temp_path("damage.crae");
    save_checkpoint(model, path.string());

    auto bytes = file_bytes(path);
    {
        std::ofstream out(temp_path("trunc.crae"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(temp_path("trunc.crae").string()), input_error);

    bytes[bytes.size() / 3] ^= 0x40;
    {
        std::ofstream out(temp_path("corrupt.crae"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(temp_path("corrupt.crae").string()), input_error);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.crae"), input_error);
}

TEST_CASE("resume after load reproduces the uninterrupted run exactly") {
    const Micro m = micro_instance();
    TrainConfig cfg = micro_config();
    cfg.epochs = 6;

    Model straight = init_model(m.vocab, m.data.ratings.n_users, m.data.ratings.n_items, cfg);
    const auto full_logs = train_epochs(straight, m.data, 6, nullptr);

    Model first = init_model(m.vocab, m.data.ratings.n_users, m.data.ratings.n_items, cfg);
    train_epochs(first, m.data, 4, nullptr);
    const auto path = temp_path("resume.crae");
    save_checkpoint(first, path.string());
    Model resumed = load_checkpoint(path.string());
    const auto tail_logs = train_epochs(resumed, m.data, 2, nullptr);

    CHECK(render_logs({full_logs[4], full_logs[5]}) == render_logs(tail_logs));
    CHECK(resumed.params.flatten() == straight.params.flatten());
}

TEST_CASE("non-finite loss aborts with a numerical failure") {
    const Micro m = micro_instance();
    Model model = init_model(m.vocab, m.data.ratings.n_users, m.data.ratings.n_items,
                             micro_config());
    model.params.output.word_b[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train_one_epoch(model, m.data), numeric_error);
}

TEST_CASE("coverage validation: a rated item must have content") {
    Micro m = micro_instance();
    m.data.sequences[3].clear();
    Model model = init_model(m.vocab, m.data.ratings.n_users, m.data.ratings.n_items,
                             micro_config());
    CHECK_THROWS_AS(train_epochs(model, m.data, 1, nullptr), input_error);
}

TEST_CASE("content holdout mask: deterministic, sized, config-derived") {
    TrainConfig cfg = micro_config();
    cfg.content_holdout = 0.25;
    const auto a = content_holdout_mask(60, cfg);
    const auto b = content_holdout_mask(60, cfg);
    CHECK(a == b);
    CHECK(std::count(a.begin(), a.end(), true) == 15);
    cfg.seed += 1;
    CHECK(content_holdout_mask(60, cfg) != a);
    cfg.content_holdout = 0.0;
    const auto none = content_holdout_mask(60, cfg);
    CHECK(std::count(none.begin(), none.end(), true) == 0);
}

TEST_CASE("learn_a: the pooling shape moves under training") {
    const Micro m = micro_instance();
    TrainConfig cfg = micro_config();
    cfg.pool = BetaPoolConfig{2.0, 1.0, true};
    cfg.epochs = 4;
    Model model = train(m.vocab, m.data, cfg, nullptr);
    CHECK(model.config.pool.a != 2.0);
    CHECK(model.config.pool.a >= 1e-3);
    CHECK(model.config.pool.a <= 1e9);

    cfg.pool = BetaPoolConfig{2.0, 3.0, true};
    CHECK_THROWS_AS(train(m.vocab, m.data, cfg, nullptr), input_error);
}

TEST_CASE("run config parsing: values, unknown keys, duplicates") {
    const auto path = temp_path("run.conf");
    {
        std::ofstream out(path);
        out << "# comment line\n";
        out << "lambda_u = 0.5\n";
        out << "lambda_s = inf\n";
        out << "mode = two_step\n";
        out << "epochs = 7\n";
        out << "recall_cutoffs = 10, 20, 50\n";
        out << "P = 3\n";
        out << "resample_per_epoch = false\n";
        out << "corpus_file = /tmp/x.tsv\n";
    }
    const RunConfig cfg = parse_run_config(path.string());
    CHECK(cfg.train.lambda_u == 0.5);
    CHECK(std::isinf(cfg.train.lambda_s));
    CHECK(cfg.train.mode == TrainMode::two_step);
    CHECK(cfg.train.epochs == 7);
    CHECK(cfg.eval.recall_cutoffs == std::vector<int>{10, 20, 50});
    CHECK(cfg.split.train_per_user == 3);
    CHECK(cfg.eval.split_p == 3);
    CHECK_FALSE(cfg.train.resample_per_epoch);
    CHECK(cfg.has("lambda_u"));
    CHECK_FALSE(cfg.has("lambda_v"));

    {
        std::ofstream out(path);
        out << "no_such_key = 1\n";
    }
    CHECK_THROWS_AS(parse_run_config(path.string()), input_error);
    {
        std::ofstream out(path);
        out << "epochs = 1\nepochs = 2\n";
    }
    CHECK_THROWS_AS(parse_run_config(path.string()), input_error);
    {
        std::ofstream out(path);
        out << "epochs = banana\n";
    }
    CHECK_THROWS_AS(parse_run_config(path.string()), input_error);
    CHECK_THROWS_AS(parse_run_config("/nonexistent.conf"), input_error);
}

TEST_CASE("train config validation rejects bad values") {
    TrainConfig cfg = micro_config();
    cfg.lambda_u = 0.0;
    CHECK_THROWS_AS(cfg.validate(), input_error);
    cfg = micro_config();
    cfg.denoise_rate = 1.5;
    CHECK_THROWS_AS(cfg.validate(), input_error);
    cfg = micro_config();
    cfg.alpha = 0.005;  // must exceed beta
    CHECK_THROWS_AS(cfg.validate(), input_error);
    cfg = micro_config();
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), input_error);
}

TEST_CASE("checkpoint: format version mismatch is rejected") {
    const Micro m = micro_instance();
    Model model = init_model(m.vocab, m.data.ratings.n_users, m.data.ratings.n_items,
                             micro_config());
    const auto path = temp_path("version.crae");
    save_checkpoint(model, path.string());
    auto bytes = file_bytes(path);
    bytes[4] = 99;  // bump the format version field behind the magic
    const uint64_t crc = crc64(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size() - 8);
    std::memcpy(bytes.data() + bytes.size() - 8, &crc, 8);
    {
        std::ofstream out(temp_path("version2.crae"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(temp_path("version2.crae").string()),
                         doctest::Contains("format version"), input_error);
}
