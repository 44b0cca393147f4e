#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace revgan {

enum class Sentiment : int { negative = -1, neutral = 0, positive = 1 };

inline std::string_view to_string(Sentiment s) {
    switch (s) {
        case Sentiment::positive: return "positive";
        case Sentiment::negative: return "negative";
        case Sentiment::neutral: return "neutral";
    }
    return "neutral";
}

inline Sentiment parse_sentiment(std::string_view s) {
    if (s == "positive" || s == "pos" || s == "+") return Sentiment::positive;
    if (s == "negative" || s == "neg" || s == "-") return Sentiment::negative;
    if (s == "neutral") return Sentiment::neutral;
    throw std::invalid_argument("unknown sentiment '" + std::string(s) + "'");
}

inline Sentiment opposite(Sentiment s) {
    if (s == Sentiment::positive) return Sentiment::negative;
    if (s == Sentiment::negative) return Sentiment::positive;
    return Sentiment::neutral;
}

/// Input data could not be used; maps to CLI exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A required earlier stage is missing; maps to CLI exit code 3.
class PrerequisiteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite value; maps to CLI exit code 4.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace revgan
