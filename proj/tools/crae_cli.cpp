// crae: hybrid sequence-autoencoder recommender, command-line front end.
//
// Subcommands: vocab, train, recommend, generate, eval, synth-data.
// Exit codes: 0 success, 2 input error, 3 numerical failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crae/crae.hpp"

namespace {

using nlohmann::json;

struct LoadedData {
    crae::Vocabulary vocab;
    crae::CorpusFile corpus;
    crae::RatingMatrix ratings;  // full ratings, before any split
    std::vector<std::vector<int>> sequences;  // encoded per item (empty = no content)
};

crae::Vocabulary obtain_vocabulary(const crae::RunConfig& cfg, const crae::CorpusFile& corpus) {
    if (!cfg.vocab_file.empty() && std::filesystem::exists(cfg.vocab_file))
        return crae::read_vocabulary_file(cfg.vocab_file);
    std::vector<std::vector<std::string>> docs;
    for (std::size_t j = 0; j < corpus.docs.size(); ++j)
        if (corpus.has_doc[j]) docs.push_back(corpus.docs[j]);
    crae::Vocabulary vocab = crae::build_vocabulary(docs, cfg.min_count);
    if (!cfg.vocab_file.empty()) crae::write_vocabulary_file(vocab, cfg.vocab_file);
    return vocab;
}

LoadedData load_data(const crae::RunConfig& cfg) {
    cfg.require_input_file("corpus_file", cfg.corpus_file);
    cfg.require_input_file("ratings_file", cfg.ratings_file);
    LoadedData d;
    d.corpus = crae::read_corpus_file(cfg.corpus_file);
    d.ratings = crae::read_ratings_file(cfg.ratings_file, d.corpus.n_items);
    if (d.corpus.n_items < d.ratings.n_items) {
        d.corpus.docs.resize(static_cast<std::size_t>(d.ratings.n_items));
        d.corpus.has_doc.resize(static_cast<std::size_t>(d.ratings.n_items), false);
        d.corpus.n_items = d.ratings.n_items;
    }
    d.vocab = obtain_vocabulary(cfg, d.corpus);
    d.sequences.resize(static_cast<std::size_t>(d.corpus.n_items));
    for (int j = 0; j < d.corpus.n_items; ++j)
        if (d.corpus.has_doc[static_cast<std::size_t>(j)])
            d.sequences[static_cast<std::size_t>(j)] =
                crae::encode_document(d.corpus.docs[static_cast<std::size_t>(j)], d.vocab);
    return d;
}

// P = 0 trains on every positive; P >= 1 applies the per-user split.
std::pair<crae::RatingMatrix, crae::RatingMatrix> apply_split(const crae::RatingMatrix& full,
                                                              const crae::RunConfig& cfg) {
    if (cfg.split.train_per_user == 0)
        return {full, crae::RatingMatrix(full.n_users, full.n_items)};
    return crae::split_ratings(full, cfg.split);
}

int cmd_vocab(const std::string& corpus_path, const std::string& out_path, int min_count) {
    if (!std::filesystem::exists(corpus_path))
        throw crae::input_error("corpus file does not exist: " + corpus_path);
    const crae::CorpusFile corpus = crae::read_corpus_file(corpus_path);
    std::vector<std::vector<std::string>> docs;
    for (std::size_t j = 0; j < corpus.docs.size(); ++j)
        if (corpus.has_doc[j]) docs.push_back(corpus.docs[j]);
    const crae::Vocabulary vocab = crae::build_vocabulary(docs, min_count);
    crae::write_vocabulary_file(vocab, out_path);
    std::cout << "vocabulary: " << vocab.size() << " tokens -> " << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& config_path) {
    const crae::RunConfig cfg = crae::parse_run_config(config_path);
    cfg.require_path("checkpoint_file", cfg.checkpoint_file);
    LoadedData data = load_data(cfg);
    auto [train_ratings, test_ratings] = apply_split(data.ratings, cfg);

    crae::TrainData td{std::move(data.sequences), std::move(train_ratings)};
    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!cfg.log_file.empty()) {
        log_file.open(cfg.log_file, std::ios::binary | std::ios::trunc);
        if (!log_file) throw crae::input_error("cannot write log file: " + cfg.log_file);
        log = &log_file;
    }
    crae::Model model = crae::train(data.vocab, td, cfg.train, log);
    crae::save_checkpoint(model, cfg.checkpoint_file);
    std::cout << "checkpoint -> " << cfg.checkpoint_file << "\n";
    return 0;
}

int cmd_recommend(const std::string& config_path) {
    const crae::RunConfig cfg = crae::parse_run_config(config_path);
    cfg.require_input_file("checkpoint_file", cfg.checkpoint_file);
    cfg.require_input_file("ratings_file", cfg.ratings_file);
    crae::Model model = crae::load_checkpoint(cfg.checkpoint_file);
    const crae::RatingMatrix full = crae::read_ratings_file(cfg.ratings_file, model.n_items());
    if (full.n_users > model.n_users() || full.n_items > model.n_items())
        throw crae::input_error("ratings file references users/items unknown to the checkpoint");
    auto [train_ratings, test_ratings] = apply_split(full, cfg);

    std::ostream* out = &std::cout;
    std::ofstream out_file;
    if (!cfg.output_file.empty()) {
        out_file.open(cfg.output_file, std::ios::binary | std::ios::trunc);
        if (!out_file) throw crae::input_error("cannot write output file: " + cfg.output_file);
        out = &out_file;
    }
    for (int u = 0; u < train_ratings.n_users; ++u) {
        const auto top = crae::rank_items(model.factors, u,
                                          train_ratings.user_items[static_cast<std::size_t>(u)],
                                          cfg.top_m);
        *out << u << '\t';
        for (std::size_t k = 0; k < top.size(); ++k) {
            if (k > 0) *out << ' ';
            *out << top[k];
        }
        *out << '\n';
    }
    return 0;
}

// theta for an item: encode its content when available, otherwise invert the
// factor through the degenerate pooling relation gamma = tanh(theta).
crae::Vector item_theta(const crae::Model& model, int item,
                        const std::vector<std::vector<int>>& sequences, bool force_factors) {
    if (!force_factors && item < static_cast<int>(sequences.size()) &&
        !sequences[static_cast<std::size_t>(item)].empty()) {
        const auto states =
            crae::encode(sequences[static_cast<std::size_t>(item)], model.params.encoder);
        return crae::compress(states.back().h, states.back().s, model.params.bottleneck);
    }
    if (item < 0 || item >= model.n_items())
        throw crae::input_error("item id out of range: " + std::to_string(item));
    crae::Vector theta = model.factors.items[static_cast<std::size_t>(item)];
    for (double& v : theta) v = std::atanh(std::clamp(v, -0.999999, 0.999999));
    return theta;
}

int cmd_generate(const std::string& config_path, const std::vector<int>& items,
                 const std::string& text_path, bool from_factors) {
    const crae::RunConfig cfg = crae::parse_run_config(config_path);
    cfg.require_input_file("checkpoint_file", cfg.checkpoint_file);
    crae::Model model = crae::load_checkpoint(cfg.checkpoint_file);

    std::vector<std::vector<int>> sequences;
    if (!cfg.corpus_file.empty()) {
        cfg.require_input_file("corpus_file", cfg.corpus_file);
        const crae::CorpusFile corpus = crae::read_corpus_file(cfg.corpus_file);
        sequences.resize(static_cast<std::size_t>(corpus.n_items));
        for (int j = 0; j < corpus.n_items; ++j)
            if (corpus.has_doc[static_cast<std::size_t>(j)])
                sequences[static_cast<std::size_t>(j)] =
                    crae::encode_document(corpus.docs[static_cast<std::size_t>(j)], model.vocab);
    }

    std::ostream* out = &std::cout;
    std::ofstream out_file;
    if (!cfg.output_file.empty()) {
        out_file.open(cfg.output_file, std::ios::binary | std::ios::trunc);
        if (!out_file) throw crae::input_error("cannot write output file: " + cfg.output_file);
        out = &out_file;
    }

    auto emit = [&](const std::vector<int>& ids) {
        const auto toks = crae::decode_sequence(ids, model.vocab);
        for (std::size_t k = 0; k < toks.size(); ++k) {
            if (k > 0) *out << ' ';
            *out << toks[k];
        }
        *out << '\n';
    };

    if (!text_path.empty()) {
        std::ifstream in(text_path);
        if (!in) throw crae::input_error("cannot open text file: " + text_path);
        std::string line;
        while (std::getline(in, line)) {
            const auto ids = crae::encode_document(crae::tokenize(line), model.vocab);
            const auto states = crae::encode(ids, model.params.encoder);
            const auto theta =
                crae::compress(states.back().h, states.back().s, model.params.bottleneck);
            emit(crae::generate(theta, model.params, model.vocab.eos_id, cfg.max_len));
        }
        return 0;
    }

    if (items.empty()) throw crae::input_error("generate: pass --items or --text");
    for (int item : items) {
        const auto theta = item_theta(model, item, sequences, from_factors);
        *out << item << '\t';
        emit(crae::generate(theta, model.params, model.vocab.eos_id, cfg.max_len));
    }
    return 0;
}

struct EvalAccumulator {
    std::map<int, double> recall;  // cutoff -> sum over repeats
    double map_sum = 0.0;
    double bleu_sum = 0.0;
    double bleu_nn_sum = 0.0;  // nearest-neighbor generation baseline
    bool has_bleu = false;
};

void eval_one_model(const crae::Model& model, const LoadedData& data,
                    const crae::RatingMatrix& train_ratings,
                    const crae::RatingMatrix& test_ratings, const crae::RunConfig& cfg,
                    EvalAccumulator& acc) {
    std::vector<std::vector<int>> rankings(static_cast<std::size_t>(train_ratings.n_users));
    for (int u = 0; u < train_ratings.n_users; ++u)
        rankings[static_cast<std::size_t>(u)] = crae::rank_items(
            model.factors, u, train_ratings.user_items[static_cast<std::size_t>(u)]);

    for (int m : cfg.eval.recall_cutoffs)
        acc.recall[m] += crae::recall_at_m(rankings, test_ratings, m).mean;
    acc.map_sum += crae::mean_average_precision(rankings, test_ratings, cfg.eval.map_cutoff).mean;

    if (cfg.eval_generation) {
        const auto holdout = crae::content_holdout_mask(
            static_cast<std::size_t>(model.n_items()), model.config);
        std::vector<int> content_items, queries;
        for (int j = 0; j < model.n_items(); ++j) {
            if (data.sequences[static_cast<std::size_t>(j)].empty()) continue;
            (holdout[static_cast<std::size_t>(j)] ? queries : content_items).push_back(j);
        }
        std::vector<std::vector<std::string>> cands, nn_cands;
        std::vector<std::vector<std::vector<std::string>>> refs;
        for (int j : queries) {
            const auto theta = item_theta(model, j, {}, /*force_factors=*/true);
            const auto ids = crae::generate(theta, model.params, model.vocab.eos_id, cfg.max_len);
            cands.push_back(crae::decode_sequence(ids, model.vocab));
            refs.push_back({data.corpus.docs[static_cast<std::size_t>(j)]});
            if (!content_items.empty()) {
                const int nn = crae::nearest_content_item(model.factors, j, content_items);
                nn_cands.push_back(crae::decode_sequence(
                    data.sequences[static_cast<std::size_t>(nn)], model.vocab));
                nn_cands.back().pop_back();  // drop the eos token
            }
        }
        if (!cands.empty()) {
            acc.bleu_sum += crae::bleu(cands, refs, cfg.eval.bleu_max_n);
            if (!nn_cands.empty())
                acc.bleu_nn_sum += crae::bleu(nn_cands, refs, cfg.eval.bleu_max_n);
            acc.has_bleu = true;
        }
    }
}

int cmd_eval(const std::string& config_path) {
    const crae::RunConfig cfg = crae::parse_run_config(config_path);
    cfg.eval.validate();
    LoadedData data = load_data(cfg);

    EvalAccumulator acc;
    const uint64_t repeats = std::max<uint64_t>(1, cfg.eval_repeats);
    if (repeats == 1) {
        cfg.require_input_file("checkpoint_file", cfg.checkpoint_file);
        crae::Model model = crae::load_checkpoint(cfg.checkpoint_file);
        auto [train_ratings, test_ratings] = apply_split(data.ratings, cfg);
        eval_one_model(model, data, train_ratings, test_ratings, cfg, acc);
    } else {
        // the repeated protocol retrains on a fresh split per repetition
        for (uint64_t r = 0; r < repeats; ++r) {
            crae::RunConfig run = cfg;
            run.split.seed = cfg.split.seed + r;
            run.train.seed = cfg.train.seed + r;
            auto [train_ratings, test_ratings] = apply_split(data.ratings, run);
            crae::TrainData td{data.sequences, train_ratings};
            crae::Model model = crae::train(data.vocab, td, run.train, nullptr);
            eval_one_model(model, data, train_ratings, test_ratings, run, acc);
        }
    }

    std::ostringstream report;
    json summary;
    report << "metric\tparam\tvalue\n";
    const double inv = 1.0 / static_cast<double>(repeats);
    for (const auto& [m, sum] : acc.recall) {
        report << "recall\t" << m << '\t' << sum * inv << '\n';
        summary["recall"][std::to_string(m)] = sum * inv;
    }
    report << "map\t" << cfg.eval.map_cutoff << '\t' << acc.map_sum * inv << '\n';
    summary["map"][std::to_string(cfg.eval.map_cutoff)] = acc.map_sum * inv;
    if (acc.has_bleu) {
        report << "bleu\t" << cfg.eval.bleu_max_n << '\t' << acc.bleu_sum * inv << '\n';
        report << "bleu_nn_baseline\t" << cfg.eval.bleu_max_n << '\t' << acc.bleu_nn_sum * inv
               << '\n';
        summary["bleu"] = acc.bleu_sum * inv;
        summary["bleu_nn_baseline"] = acc.bleu_nn_sum * inv;
    }
    summary["repeats"] = repeats;
    summary["P"] = cfg.split.train_per_user;
    report << '\n' << summary.dump() << '\n';

    if (!cfg.metrics_file.empty()) {
        std::ofstream out(cfg.metrics_file, std::ios::binary | std::ios::trunc);
        if (!out) throw crae::input_error("cannot write metrics file: " + cfg.metrics_file);
        out << report.str();
    } else {
        std::cout << report.str();
    }
    return 0;
}

int cmd_synth_data(const crae::SynthSpec& spec, const std::string& corpus_path,
                   const std::string& ratings_path) {
    const crae::SynthData data = crae::make_synthetic(spec);
    crae::write_synthetic_files(data, corpus_path, ratings_path);
    std::cout << "synthetic dataset: " << data.docs.size() << " items, "
              << data.ratings.n_users << " users, " << data.ratings.n_positives()
              << " positives -> " << corpus_path << ", " << ratings_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"collaborative recurrent autoencoder"};
    app.require_subcommand(1);

    std::string corpus_path, out_path, config_path, text_path, ratings_path;
    int min_count = 1;
    std::vector<int> items;
    bool from_factors = false;
    crae::SynthSpec synth;

    auto* vocab = app.add_subcommand("vocab", "build a vocabulary file from a corpus");
    vocab->add_option("--corpus", corpus_path, "corpus file (item_id<TAB>tokens)")->required();
    vocab->add_option("--out", out_path, "output vocabulary file")->required();
    vocab->add_option("--min-count", min_count, "minimum token frequency");

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "run configuration")->required();

    auto* recommend = app.add_subcommand("recommend", "emit top-M items per user");
    recommend->add_option("--config", config_path, "run configuration")->required();

    auto* generate = app.add_subcommand("generate", "generate sequences from items or raw text");
    generate->add_option("--config", config_path, "run configuration")->required();
    generate->add_option("--items", items, "item ids to generate for")->delimiter(',');
    generate->add_option("--text", text_path, "file of raw text lines to reconstruct");
    generate->add_flag("--from-factors", from_factors,
                       "derive theta from item factors even when content exists");

    auto* eval = app.add_subcommand("eval", "evaluate ranking (and optionally generation)");
    eval->add_option("--config", config_path, "run configuration")->required();

    auto* synth_cmd = app.add_subcommand("synth-data", "write the bundled synthetic dataset");
    synth_cmd->add_option("--out-corpus", corpus_path, "output corpus file")->required();
    synth_cmd->add_option("--out-ratings", ratings_path, "output ratings file")->required();
    synth_cmd->add_option("--seed", synth.seed, "generator seed");
    synth_cmd->add_option("--clusters", synth.clusters, "number of clusters");
    synth_cmd->add_option("--users", synth.users, "number of users");
    synth_cmd->add_option("--items", synth.items, "number of items");
    synth_cmd->add_option("--vocab", synth.vocab, "vocabulary size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (vocab->parsed()) return cmd_vocab(corpus_path, out_path, min_count);
        if (train->parsed()) return cmd_train(config_path);
        if (recommend->parsed()) return cmd_recommend(config_path);
        if (generate->parsed()) return cmd_generate(config_path, items, text_path, from_factors);
        if (eval->parsed()) return cmd_eval(config_path);
        if (synth_cmd->parsed()) return cmd_synth_data(synth, corpus_path, ratings_path);
    } catch (const crae::input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const crae::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
