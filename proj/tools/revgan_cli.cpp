#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "revgan/pipeline.hpp"
#include "revgan/synthetic.hpp"
#include "revgan/types.hpp"

using namespace revgan;

namespace {

std::array<std::array<double, 2>, 2> parse_confusion(const std::vector<double>& v) {
    if (v.size() != 4) throw InputError("--confusion expects four comma-separated counts a,b,c,d");
    return {{{v[0], v[1]}, {v[2], v[3]}}};
}

void print_laws(const LawReport& r) {
    auto line = [&r](const char* law, const std::optional<LawFit>& f) {
        if (!f) return;
        std::printf("%-10s %-6s exponent=%.4f prefactor=%.4f r2=%.4f points=%zu\n", r.corpus.c_str(), law, f->exponent,
                    f->prefactor, f->r2, f->points.size());
    };
    line("zipf", r.zipf);
    line("heaps", r.heaps);
    for (const auto& e : r.errors) std::fprintf(stderr, "warning: %s: %s\n", r.corpus.c_str(), e.c_str());
}

void print_comparisons(const std::vector<BootstrapResult>& rs) {
    for (const auto& c : rs) {
        std::printf("%-20s diff=%+.6f se=%.6f t=%.3f p=%.4g B=%zu failed=%zu\n", c.metric.c_str(), c.point,
                    c.standard_error, c.t, c.p_value, c.resamples, c.failed);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Review generation pipeline: ingest, train, generate, evaluate"};
    app.require_subcommand(1);

    std::string config_file;
    std::vector<std::string> overrides;
    RunConfig cfg;
    app.add_option("-c,--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("-s,--set", overrides, "Override a config key (key=value); repeatable");

    auto* ingest = app.add_subcommand("ingest", "Tokenize and label a JSON-lines corpus");

    auto* train = app.add_subcommand("train", "Train one stage: sentence, then recursive, then gan");
    std::string stage;
    train->add_option("--stage", stage, "sentence | recursive | gan")->required();

    auto* generate = app.add_subcommand("generate", "Generate reviews for a product and sentiment");
    GenerateRequest greq;
    std::string sentiment = "positive";
    generate->add_option("--product", greq.product_id, "Product id");
    generate->add_option("--sentiment", sentiment, "positive | negative");
    generate->add_option("--user", greq.user_id, "User whose writing style to imitate");
    generate->add_option("-n,--count", greq.n, "Number of reviews");
    generate->add_flag("--from-corpus", greq.from_corpus,
                       "One review per labelled organic review, reusing its product, sentiment and user");

    auto* evaluate = app.add_subcommand("evaluate", "Score a generation run");
    EvaluateRequest ereq;
    std::string generated_dir, baseline_dir;
    std::vector<double> confusion;
    evaluate->add_option("--generated", generated_dir, "Generation run directory (default: latest)");
    evaluate->add_option("--baseline", baseline_dir, "Second generation run for bootstrap comparisons");
    evaluate->add_option("--confusion", confusion, "2x2 confusion matrix a,b,c,d for a chi-square test")->delimiter(',');
    evaluate->add_flag("--self-check", ereq.self_check, "Score the organic reviews against themselves");

    auto* stats = app.add_subcommand("stats", "Standalone significance tests");
    std::vector<double> stats_confusion, t_args;
    std::string run_a, run_b;
    stats->add_option("--confusion", stats_confusion, "a,b,c,d")->delimiter(',');
    stats->add_option("--t", t_args, "mean_a,mean_b,pooled_sd,n")->delimiter(',');
    stats->add_option("--a", run_a, "Generation run A for a paired bootstrap");
    stats->add_option("--b", run_b, "Generation run B for a paired bootstrap");

    auto* laws = app.add_subcommand("laws", "Zipf and Heaps fits of a text file");
    std::string laws_input;
    laws->add_option("--input", laws_input, "Text file (default: reviews.txt of the latest generation run)");

    auto* synth = app.add_subcommand("synth", "Write a toy corpus with disjoint sentiment lexicons");
    SyntheticConfig scfg;
    std::string synth_out, synth_lexicon;
    synth->add_option("--out", synth_out, "JSON-lines output")->required();
    synth->add_option("--lexicon-out", synth_lexicon, "Lexicon output")->required();
    synth->add_option("--reviews", scfg.reviews, "Number of reviews");
    synth->add_option("--products", scfg.products, "Number of products (at most 8)");
    synth->add_option("--users", scfg.users, "Number of users");
    synth->add_option("--filler-rate", scfg.filler_rate, "Chance of a sentiment-free third sentence")
        ->check(CLI::Range(0.0, 1.0));
    synth->add_option("--word-skew", scfg.word_skew, "Zipf exponent for polar word choice")->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", scfg.seed, "Random seed");

    auto* show = app.add_subcommand("config", "Print the effective configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!config_file.empty()) cfg.load_file(config_file);
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + o + "'");
            cfg.set(o.substr(0, eq), o.substr(eq + 1));
        }

        if (*show) {
            std::cout << cfg.to_kv();
        } else if (*ingest) {
            const auto dir = run_ingest(cfg);
            std::cout << "ingest: " << dir.string() << "\n";
        } else if (*train) {
            const auto dir = run_train(cfg, parse_stage(stage));
            std::cout << stage << ": " << dir.string() << "\n";
        } else if (*generate) {
            greq.sentiment = parse_sentiment(sentiment);
            if (!greq.from_corpus && greq.product_id.empty()) throw InputError("generate needs --product or --from-corpus");
            const auto dir = run_generate(cfg, greq, std::cerr);
            std::cout << "generate: " << dir.string() << "\n";
        } else if (*evaluate) {
            ereq.generated = generated_dir;
            ereq.baseline = baseline_dir;
            if (!confusion.empty()) ereq.confusion = parse_confusion(confusion);
            const auto out = run_evaluate(cfg, ereq);
            std::cout << MetricsReport::table_header() << "\n"
                      << out.report.table_row(ereq.self_check ? "organic" : "generated") << "\n";
            std::printf("sentiment accuracy: %.4f (%zu samples)\n", out.report.sentiment_accuracy,
                        out.report.sample_count);
            print_comparisons(out.comparisons);
            if (out.chi_square) {
                std::printf("chi-square: %.6f (df=1, p=%.4f)\n", out.chi_square->statistic, out.chi_square->p_value);
            }
            for (const auto& l : out.laws) print_laws(l);
            std::cout << "evaluate: " << out.dir.string() << "\n";
        } else if (*stats) {
            if (stats_confusion.empty() && t_args.empty() && run_a.empty()) {
                throw InputError("stats needs --confusion, --t or --a/--b");
            }
            if (!stats_confusion.empty()) {
                const auto r = chi_square_independence(parse_confusion(stats_confusion));
                std::printf("chi-square: %.6f (df=1, p=%.4f)\n", r.statistic, r.p_value);
            }
            if (!t_args.empty()) {
                if (t_args.size() != 4 || t_args[3] < 0) throw InputError("--t expects mean_a,mean_b,pooled_sd,n");
                const double t = two_sample_t(t_args[0], t_args[1], t_args[2], static_cast<std::size_t>(t_args[3]));
                std::printf("t: %.6f (p=%.4g)\n", t, normal_two_sided_p(t));
            }
            if (!run_a.empty() || !run_b.empty()) {
                if (run_a.empty() || run_b.empty()) throw InputError("--a and --b must be given together");
                EvaluateRequest req;
                req.generated = run_a;
                req.baseline = run_b;
                print_comparisons(run_evaluate(cfg, req).comparisons);
            }
        } else if (*laws) {
            std::filesystem::path input = laws_input;
            if (input.empty()) {
                const auto latest = latest_done(cfg.out_dir / "generate");
                if (!latest) throw PrerequisiteError("no generation run to fit; pass --input or run `revgan generate`");
                input = *latest / "reviews.txt";
            }
            const auto [dir, rep] = run_laws(cfg, input);
            print_laws(rep);
            std::cout << "laws: " << dir.string() << "\n";
        } else if (*synth) {
            const SyntheticCorpus c = make_synthetic_corpus(scfg);
            std::ofstream(synth_out, std::ios::binary) << to_jsonl(c.records);
            std::ofstream(synth_lexicon, std::ios::binary) << c.lexicon_text;
            std::cout << "wrote " << c.records.size() << " reviews to " << synth_out << "\n";
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const PrerequisiteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
