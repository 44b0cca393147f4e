#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "revgan/conditional_gan.hpp"
#include "revgan/corpus.hpp"
#include "revgan/metrics.hpp"
#include "revgan/personalized_decoder.hpp"
#include "revgan/recursive_autoencoder.hpp"
#include "revgan/seq_autoencoder.hpp"
#include "revgan/stats.hpp"

namespace revgan {

/// Every tunable of a pipeline run. Defaults are the full-scale settings.
struct RunConfig {
    std::filesystem::path corpus;
    std::filesystem::path lexicon;
    std::filesystem::path out_dir = "runs";
    std::uint64_t seed = 1;
    std::size_t vocab_cap = default_vocab_cap;
    double sentiment_threshold = 0.05;

    SeqConfig sentence;
    SeqTrainConfig sentence_train;
    RecursiveTrainConfig recursive_train;
    GanConfig gan;
    DecodeOptions decode;

    bool bleu_smoothing = false;
    std::size_t bootstrap_resamples = 1000;
    /// References per generated review for WMD.
    std::size_t wmd_references = 16;

    /// Throws InputError on an unknown key or unparsable value.
    void set(const std::string& key, const std::string& value);
    /// "key = value" lines; '#' starts a comment.
    void load_file(const std::filesystem::path& path);
    /// Every key in a fixed order.
    std::string to_kv() const;
    static std::vector<std::string> keys();
};

enum class Stage { sentence, recursive, gan };
Stage parse_stage(const std::string& s);
std::string stage_name(Stage s);

/// Creates root/NNN with the next unused number.
std::filesystem::path next_run_dir(const std::filesystem::path& root);
/// Highest-numbered run under root that has a DONE marker, if any.
std::optional<std::filesystem::path> latest_done(const std::filesystem::path& root);

struct CorpusArtifacts {
    Vocabulary vocab;
    std::vector<Document> reviews;
    std::map<std::string, Document> descriptions;
};
CorpusArtifacts load_ingest(const std::filesystem::path& dir);

std::filesystem::path run_ingest(const RunConfig& cfg);
std::filesystem::path run_train(const RunConfig& cfg, Stage stage);

struct GenerateRequest {
    std::string product_id;
    Sentiment sentiment = Sentiment::positive;
    std::string user_id;
    std::size_t n = 1;
    /// Ignore the fields above and generate one review per labelled organic
    /// review, reusing its product, sentiment and user.
    bool from_corpus = false;
};

struct GeneratedReview {
    std::string product_id;
    Sentiment sentiment = Sentiment::positive;
    std::string user_id;
    bool personalized = false;
    Document document;
    std::string text;
};

std::filesystem::path run_generate(const RunConfig& cfg, const GenerateRequest& request, std::ostream& warnings);
std::vector<GeneratedReview> load_generated(const std::filesystem::path& dir, const Vocabulary& vocab);

struct EvaluateRequest {
    /// Generation run to score; the latest one when empty.
    std::filesystem::path generated;
    /// Second generation run for paired bootstrap comparisons.
    std::filesystem::path baseline;
    std::optional<std::array<std::array<double, 2>, 2>> confusion;
    /// Score the labelled organic reviews in place of generated ones.
    bool self_check = false;
};

struct LawReport {
    std::string corpus;
    std::optional<LawFit> zipf;
    std::optional<LawFit> heaps;
    std::vector<std::string> errors;
};

struct EvaluateOutcome {
    std::filesystem::path dir;
    MetricsReport report;
    std::vector<BootstrapResult> comparisons;
    std::optional<ChiSquareResult> chi_square;
    std::vector<LawReport> laws;
};

EvaluateOutcome run_evaluate(const RunConfig& cfg, const EvaluateRequest& request);

/// Zipf and Heaps fits over the whitespace tokens of a text file; CSVs land in
/// a new run under out_dir/laws.
std::pair<std::filesystem::path, LawReport> run_laws(const RunConfig& cfg, const std::filesystem::path& text_file);

}  // namespace revgan
