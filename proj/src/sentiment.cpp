#include "revgan/sentiment.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace revgan {

namespace {

constexpr double booster_up = 1.293;
constexpr double booster_down = 0.707;

bool is_terminator_token(const std::string& t) { return t == "." || t == "!" || t == "?"; }

}  // namespace

std::set<std::string> Lexicon::default_negators() {
    return {"aint",     "arent",    "cannot",  "cant",     "couldnt",  "darent",  "didnt",
            "doesnt",   "ain't",    "aren't",  "can't",    "couldn't", "daren't", "didn't",
            "doesn't",  "dont",     "hadnt",   "hasnt",    "havent",   "isnt",    "mightnt",
            "mustnt",   "neither",  "don't",   "hadn't",   "hasn't",   "haven't", "isn't",
            "mightn't", "mustn't",  "neednt",  "needn't",  "never",    "none",    "nope",
            "nor",      "not",      "nothing", "nowhere",  "oughtnt",  "shant",   "shouldnt",
            "wasnt",    "werent",   "oughtn't", "shan't",  "shouldn't", "wasn't", "weren't",
            "without",  "wont",     "wouldnt", "won't",    "wouldn't", "rarely",  "seldom",
            "despite",  "no"};
}

std::unordered_map<std::string, double> Lexicon::default_intensifiers() {
    std::unordered_map<std::string, double> m;
    for (const char* w : {"absolutely", "amazingly", "awfully", "completely", "considerably",
                          "decidedly", "deeply", "enormously", "entirely", "especially",
                          "exceptionally", "extremely", "fabulously", "fully", "greatly", "highly",
                          "hugely", "incredibly", "intensely", "majorly", "more", "most",
                          "particularly", "purely", "quite", "really", "remarkably", "so",
                          "substantially", "thoroughly", "totally", "tremendously", "unbelievably",
                          "unusually", "utterly", "very"}) {
        m[w] = booster_up;
    }
    for (const char* w : {"almost", "barely", "hardly", "kinda", "less", "little", "marginally",
                          "occasionally", "partly", "scarcely", "slightly", "somewhat", "sorta"}) {
        m[w] = booster_down;
    }
    return m;
}

Lexicon Lexicon::parse(std::string_view text) {
    Lexicon lex;
    lex.negators = default_negators();
    lex.intensifiers = default_intensifiers();
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw InputError("lexicon line " + std::to_string(line_no) + ": expected token<TAB>valence");
        }
        const std::string token = line.substr(0, tab);
        std::string rest = line.substr(tab + 1);
        const auto tab2 = rest.find('\t');
        if (tab2 != std::string::npos) rest = rest.substr(0, tab2);
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(rest, &used);
            if (used != rest.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw InputError("lexicon line " + std::to_string(line_no) + ": bad valence '" + rest + "'");
        }
        if (!std::isfinite(v)) throw InputError("lexicon line " + std::to_string(line_no) + ": non-finite");
        lex.valence[token] = v;
    }
    return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read lexicon " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

Sentiment label_for(double compound, double threshold) {
    if (compound >= threshold) return Sentiment::positive;
    if (compound <= -threshold) return Sentiment::negative;
    return Sentiment::neutral;
}

SentimentLabel score(std::string_view text, const Lexicon& lex) {
    const auto tokens = word_tokens(text);
    double total = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto it = lex.valence.find(tokens[i]);
        if (it == lex.valence.end()) continue;
        double v = it->second;
        if (i > 0) {
            auto boost = lex.intensifiers.find(tokens[i - 1]);
            if (boost != lex.intensifiers.end()) v *= boost->second;
        }
        std::size_t seen = 0;
        for (std::size_t j = i; j > 0 && seen < Lexicon::negation_window; --j) {
            const std::string& prev = tokens[j - 1];
            if (is_terminator_token(prev)) break;
            ++seen;
            if (lex.negators.count(prev)) {
                v *= Lexicon::negation_scalar;
                break;
            }
        }
        total += v;
    }
    SentimentLabel out;
    out.compound = total / std::sqrt(total * total + Lexicon::normalization_alpha);
    out.label = label_for(out.compound, lex.threshold);
    return out;
}

std::string document_text(const Document& doc, const Vocabulary& vocab) {
    std::string text;
    for (const auto& s : doc.sentences) {
        if (!text.empty()) text += ' ';
        text += detokenize(s, vocab);
    }
    return text;
}

LabelStats label_corpus(std::vector<Document>& docs, const Vocabulary& vocab, const Lexicon& lex) {
    LabelStats stats;
    for (auto& d : docs) {
        d.sentiment = score(document_text(d, vocab), lex).label;
        d.excluded = d.sentiment == Sentiment::neutral;
        switch (d.sentiment) {
            case Sentiment::positive: ++stats.positive; break;
            case Sentiment::negative: ++stats.negative; break;
            case Sentiment::neutral: ++stats.neutral; break;
        }
    }
    return stats;
}

}  // namespace revgan
