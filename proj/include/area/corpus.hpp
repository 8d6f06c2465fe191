#ifndef AREA_CORPUS_HPP
#define AREA_CORPUS_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace area {

struct TextRecord {
    std::string id;
    std::vector<std::string> tokens;
    std::string raw_text;
};

// Lowercase, split on non-alphanumeric runs. Pure and deterministic.
std::vector<std::string> tokenize(const std::string& text);

// Build a record from raw text; tokens derived via tokenize().
TextRecord make_record(std::string id, const std::string& text);

class Vocabulary {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens_in_index_order);

    // Index of a token, or the shared OOV index for unknown tokens.
    std::size_t index_of(const std::string& token) const;
    // In-vocabulary lookup; npos when unknown.
    std::size_t find(const std::string& token) const;
    const std::string& token_at(std::size_t index) const;

    std::size_t size() const { return index_to_token_.size(); }
    // OOV shares one trailing index; the embedding table has size()+1 rows.
    std::size_t oov_index() const { return index_to_token_.size(); }
    bool contains(const std::string& token) const { return find(token) != npos; }

    const std::vector<std::string>& tokens() const { return index_to_token_; }

private:
    std::unordered_map<std::string, std::size_t> token_to_index_;
    std::vector<std::string> index_to_token_;
};

// Immutable after construction; id lookup in O(1).
class RecordStore {
public:
    RecordStore() = default;
    explicit RecordStore(std::vector<TextRecord> records);

    const std::vector<TextRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    const TextRecord& at(std::size_t i) const { return records_[i]; }
    const TextRecord& by_id(const std::string& id) const;
    std::size_t index_of_id(const std::string& id) const;
    bool has_id(const std::string& id) const { return id_to_index_.count(id) != 0; }

private:
    std::vector<TextRecord> records_;
    std::unordered_map<std::string, std::size_t> id_to_index_;
};

// Tokens ordered by frequency descending, ties lexicographic ascending.
// Tokens below min_count are left out and map to the OOV index.
Vocabulary build_vocab(const std::vector<TextRecord>& records, std::size_t min_count);

struct SyntheticSpec {
    std::size_t num_topics = 20;
    std::size_t docs_per_topic = 100;
    std::size_t vocab_size = 800;
    std::size_t doc_len_min = 30;
    std::size_t doc_len_max = 60;
    std::size_t queries_per_topic = 13;
    double background_rate = 0.3;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SyntheticData {
    RecordStore corpus;
    RecordStore queries;
    // (query_id, doc_id) relevance pairs, one per query.
    std::vector<std::pair<std::string, std::string>> qrels;
};

// Topic-clustered corpus and queries; fully determined by spec.seed.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// File formats: records `id<TAB>text`, vocabulary `token<TAB>index`,
// relevance `query_id<TAB>doc_id`. UTF-8, \n line endings.
void save_records(const RecordStore& store, const std::string& path);
RecordStore load_records(const std::string& path);
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);
void save_qrels(const std::vector<std::pair<std::string, std::string>>& qrels, const std::string& path);
std::vector<std::pair<std::string, std::string>> load_qrels(const std::string& path);

struct Store {
    RecordStore records;
    Vocabulary vocab;
};

void save_store(const Store& store, const std::string& records_path, const std::string& vocab_path);
Store load_store(const std::string& records_path, const std::string& vocab_path);

} // namespace area

#endif
