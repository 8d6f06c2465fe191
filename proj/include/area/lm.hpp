#ifndef AREA_LM_HPP
#define AREA_LM_HPP

#include "area/corpus.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace area {

// Bigram language model with add-one smoothing, trained on a token corpus.
// The event space has vocab_size + 1 outcomes (the extra one is OOV), so an
// untrained model is uniform over that count.
class BigramLm {
public:
    BigramLm() = default;
    BigramLm(const RecordStore& corpus, const Vocabulary& vocab);

    // P(next | prev) with add-one smoothing.
    double prob(const std::string& prev, const std::string& next) const;

    // exp of mean negative log bigram probability over the sequence.
    // Sequences shorter than 2 tokens are an error.
    double perplexity(const std::vector<std::string>& tokens) const;

    std::size_t event_count() const { return event_count_; }

private:
    std::size_t token_key(const std::string& tok) const;

    std::size_t event_count_ = 0;
    std::unordered_map<std::string, std::size_t> token_ids_;
    std::vector<double> unigram_counts_;
    std::unordered_map<std::uint64_t, double> bigram_counts_;
};

} // namespace area

#endif
