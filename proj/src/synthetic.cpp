#include "revgan/synthetic.hpp"

#include <json.hpp>
#include <cmath>
#include <random>

namespace revgan {

namespace {

const std::vector<std::string> nouns{"lamp", "kettle", "chair", "blender", "toaster", "heater", "mirror", "clock"};
const std::vector<std::string> materials{"steel", "wood", "glass", "plastic"};
// Ordered by how often they are drawn.
const std::vector<std::string> pos_adj{"great", "excellent", "superb", "wonderful", "lovely", "fantastic", "splendid", "delightful"};
const std::vector<std::string> neg_adj{"terrible", "awful", "dreadful", "horrible", "lousy", "dismal", "abysmal", "atrocious"};
const std::vector<std::string> pos_verb{"love", "like", "adore", "enjoy"};
const std::vector<std::string> neg_verb{"hate", "dislike", "loathe", "detest"};
const std::vector<std::string> extras{
    "box",    "week",   "friend", "gift",   "price",  "size",   "colour", "kitchen", "office",    "bedroom",
    "morning", "evening", "neighbour", "sister", "brother", "cousin", "order", "store",  "garden", "hallway",
    "table",  "shelf",  "window", "door",   "sofa",   "desk",   "cup",    "plate",   "bag",       "card",
    "note",   "ribbon", "parcel", "van",    "driver", "street", "city",   "town",    "village",   "manual"};

// Rank r is drawn with weight 1 / r^s.
const std::string& pick_zipf(const std::vector<std::string>& v, double s, std::mt19937_64& rng) {
    std::vector<double> w(v.size());
    for (std::size_t r = 0; r < v.size(); ++r) w[r] = 1.0 / std::pow(static_cast<double>(r + 1), s);
    return v[std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng)];
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config) {
    if (config.products == 0 || config.products > nouns.size()) {
        throw std::invalid_argument("synthetic corpus: products must be between 1 and " + std::to_string(nouns.size()));
    }
    if (config.users == 0) throw std::invalid_argument("synthetic corpus: need at least one user");
    SyntheticCorpus out;
    out.marked_user = "u0";
    out.marked_words = {"superb", "dreadful", "adore", "loathe"};
    out.positive_words.insert(pos_adj.begin(), pos_adj.end());
    out.positive_words.insert(pos_verb.begin(), pos_verb.end());
    out.negative_words.insert(neg_adj.begin(), neg_adj.end());
    out.negative_words.insert(neg_verb.begin(), neg_verb.end());
    for (const auto& w : out.positive_words) out.lexicon_text += w + "\t2.0\n";
    for (const auto& w : out.negative_words) out.lexicon_text += w + "\t-2.0\n";

    std::mt19937_64 rng(config.seed);
    std::bernoulli_distribution coin(0.5), filler(config.filler_rate);
    for (std::size_t i = 0; i < config.reviews; ++i) {
        RawRecord r;
        const std::size_t p = i % config.products;
        const std::size_t u = (i / config.products) % config.users;
        r.product_id = "p" + std::to_string(p);
        r.user_id = "u" + std::to_string(u);
        const std::string& noun = nouns[p];
        r.description_text = "a " + noun + " for your home. it is made of " + materials[p % materials.size()] + ".";
        const bool positive = coin(rng);
        r.stars = positive ? 5 : 1;
        const bool marked = r.user_id == out.marked_user;
        std::string adj, verb;
        if (positive) {
            adj = marked ? "superb" : pick_zipf(pos_adj, config.word_skew, rng);
            verb = marked ? "adore" : pick_zipf(pos_verb, config.word_skew, rng);
        } else {
            adj = marked ? "dreadful" : pick_zipf(neg_adj, config.word_skew, rng);
            verb = marked ? "loathe" : pick_zipf(neg_verb, config.word_skew, rng);
        }
        r.review_text = "the " + noun + " is " + adj + ". i " + verb + " this " + noun + ".";
        if (filler(rng)) r.review_text += " it came with the " + pick_zipf(extras, 1.0, rng) + ".";
        out.records.push_back(std::move(r));
    }
    return out;
}

std::string to_jsonl(const std::vector<RawRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j{{"user_id", r.user_id},
                         {"product_id", r.product_id},
                         {"review_text", r.review_text},
                         {"description_text", r.description_text},
                         {"stars", r.stars}};
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace revgan
