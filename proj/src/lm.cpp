#include "area/lm.hpp"

#include <cmath>
#include <stdexcept>

namespace area {

BigramLm::BigramLm(const RecordStore& corpus, const Vocabulary& vocab) {
    event_count_ = vocab.size() + 1;
    token_ids_.reserve(vocab.size());
    for (std::size_t i = 0; i < vocab.size(); ++i) token_ids_.emplace(vocab.token_at(i), i);
    unigram_counts_.assign(event_count_, 0.0);
    for (const auto& rec : corpus.records()) {
        for (std::size_t i = 0; i + 1 < rec.tokens.size(); ++i) {
            std::size_t a = token_key(rec.tokens[i]);
            std::size_t b = token_key(rec.tokens[i + 1]);
            unigram_counts_[a] += 1.0;
            bigram_counts_[(static_cast<std::uint64_t>(a) << 32) | b] += 1.0;
        }
    }
}

std::size_t BigramLm::token_key(const std::string& tok) const {
    auto it = token_ids_.find(tok);
    return it == token_ids_.end() ? event_count_ - 1 : it->second;
}

double BigramLm::prob(const std::string& prev, const std::string& next) const {
    if (event_count_ == 0) throw std::logic_error("language model not trained");
    std::size_t a = token_key(prev);
    std::size_t b = token_key(next);
    auto it = bigram_counts_.find((static_cast<std::uint64_t>(a) << 32) | b);
    double joint = it == bigram_counts_.end() ? 0.0 : it->second;
    return (joint + 1.0) / (unigram_counts_[a] + static_cast<double>(event_count_));
}

double BigramLm::perplexity(const std::vector<std::string>& tokens) const {
    if (tokens.size() < 2) throw std::invalid_argument("perplexity needs at least 2 tokens");
    double nll = 0.0;
    for (std::size_t i = 1; i < tokens.size(); ++i) nll -= std::log(prob(tokens[i - 1], tokens[i]));
    return std::exp(nll / static_cast<double>(tokens.size() - 1));
}

} // namespace area
