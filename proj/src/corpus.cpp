#include "area/corpus.hpp"

#include "area/rng.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace area {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

TextRecord make_record(std::string id, const std::string& text) {
    TextRecord rec;
    rec.id = std::move(id);
    rec.raw_text = text;
    rec.tokens = tokenize(text);
    return rec;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens_in_index_order)
    : index_to_token_(std::move(tokens_in_index_order)) {
    token_to_index_.reserve(index_to_token_.size());
    for (std::size_t i = 0; i < index_to_token_.size(); ++i) {
        auto inserted = token_to_index_.emplace(index_to_token_[i], i).second;
        if (!inserted) throw std::invalid_argument("vocabulary: duplicate token '" + index_to_token_[i] + "'");
    }
}

std::size_t Vocabulary::index_of(const std::string& token) const {
    auto it = token_to_index_.find(token);
    return it == token_to_index_.end() ? oov_index() : it->second;
}

std::size_t Vocabulary::find(const std::string& token) const {
    auto it = token_to_index_.find(token);
    return it == token_to_index_.end() ? npos : it->second;
}

const std::string& Vocabulary::token_at(std::size_t index) const {
    if (index >= index_to_token_.size()) throw std::out_of_range("vocabulary: index out of range");
    return index_to_token_[index];
}

RecordStore::RecordStore(std::vector<TextRecord> records) : records_(std::move(records)) {
    id_to_index_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        auto inserted = id_to_index_.emplace(records_[i].id, i).second;
        if (!inserted) throw std::invalid_argument("record store: duplicate id '" + records_[i].id + "'");
    }
}

const TextRecord& RecordStore::by_id(const std::string& id) const {
    return records_[index_of_id(id)];
}

std::size_t RecordStore::index_of_id(const std::string& id) const {
    auto it = id_to_index_.find(id);
    if (it == id_to_index_.end()) throw std::out_of_range("record store: unknown id '" + id + "'");
    return it->second;
}

Vocabulary build_vocab(const std::vector<TextRecord>& records, std::size_t min_count) {
    if (records.empty()) throw std::invalid_argument("empty corpus");
    std::map<std::string, std::size_t> freq;
    for (const auto& rec : records) {
        for (const auto& tok : rec.tokens) ++freq[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    kept.reserve(freq.size());
    for (auto& kv : freq) {
        if (kv.second >= min_count) kept.emplace_back(kv.first, kv.second);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> ordered;
    ordered.reserve(kept.size());
    for (auto& kv : kept) ordered.push_back(std::move(kv.first));
    return Vocabulary(std::move(ordered));
}

void SyntheticSpec::validate() const {
    if (num_topics < 1 || docs_per_topic < 1 || vocab_size < 1 || queries_per_topic < 1)
        throw std::invalid_argument("synthetic spec: all counts must be >= 1");
    if (vocab_size < num_topics)
        throw std::invalid_argument("synthetic spec: vocab_size must be >= num_topics");
    if (doc_len_min < 1 || doc_len_max < doc_len_min)
        throw std::invalid_argument("synthetic spec: invalid doc length range");
    if (background_rate < 0.0 || background_rate > 1.0)
        throw std::invalid_argument("synthetic spec: background_rate outside [0,1]");
}

namespace {

std::string padded_id(const char* prefix, std::size_t value, int width) {
    std::string digits = std::to_string(value);
    std::string out(prefix);
    for (int i = static_cast<int>(digits.size()); i < width; ++i) out.push_back('0');
    out += digits;
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

} // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();

    // One fifth of the vocabulary is shared background; topic keyword sets
    // split the remainder evenly and are pairwise disjoint.
    std::size_t background_count = spec.vocab_size / 5;
    std::size_t keywords_per_topic = (spec.vocab_size - background_count) / spec.num_topics;
    if (keywords_per_topic < 4)
        throw std::invalid_argument("synthetic spec: vocab_size too small for 4 keywords per topic");
    if (background_count == 0 && spec.background_rate > 0.0)
        throw std::invalid_argument("synthetic spec: background_rate > 0 with no background tokens");

    std::vector<std::vector<std::string>> topic_keywords(spec.num_topics);
    for (std::size_t t = 0; t < spec.num_topics; ++t) {
        topic_keywords[t].reserve(keywords_per_topic);
        for (std::size_t k = 0; k < keywords_per_topic; ++k)
            topic_keywords[t].push_back("t" + std::to_string(t) + "w" + std::to_string(k));
    }
    std::vector<std::string> background(background_count);
    for (std::size_t b = 0; b < background_count; ++b) background[b] = "bg" + std::to_string(b);

    Rng rng(mix_seed(spec.seed, "synthetic"));

    std::vector<TextRecord> docs;
    docs.reserve(spec.num_topics * spec.docs_per_topic);
    for (std::size_t t = 0; t < spec.num_topics; ++t) {
        for (std::size_t d = 0; d < spec.docs_per_topic; ++d) {
            std::size_t len = static_cast<std::size_t>(
                rng.uniform_int(static_cast<std::int64_t>(spec.doc_len_min),
                                static_cast<std::int64_t>(spec.doc_len_max)));
            std::vector<std::string> tokens;
            tokens.reserve(len);
            // Topical tokens follow a ring order over the topic's keyword
            // set with occasional jumps, so natural text has predictable
            // local transitions while shuffled or stuffed text does not.
            std::size_t ring = rng.below(keywords_per_topic);
            for (std::size_t i = 0; i < len; ++i) {
                bool from_background = background_count > 0 && rng.unit() < spec.background_rate;
                if (from_background) {
                    tokens.push_back(background[rng.below(background_count)]);
                    continue;
                }
                if (rng.unit() < 0.1) ring = rng.below(keywords_per_topic);
                tokens.push_back(topic_keywords[t][ring]);
                ring = (ring + 1) % keywords_per_topic;
            }
            TextRecord rec;
            rec.id = padded_id("d", docs.size(), 6);
            rec.raw_text = join_tokens(tokens);
            rec.tokens = std::move(tokens);
            docs.push_back(std::move(rec));
        }
    }

    std::vector<TextRecord> queries;
    std::vector<std::pair<std::string, std::string>> qrels;
    queries.reserve(spec.num_topics * spec.queries_per_topic);
    for (std::size_t t = 0; t < spec.num_topics; ++t) {
        for (std::size_t q = 0; q < spec.queries_per_topic; ++q) {
            std::size_t nk = static_cast<std::size_t>(rng.uniform_int(2, 4));
            auto picks = rng.sample_without_replacement(keywords_per_topic, nk);
            std::vector<std::string> tokens;
            tokens.reserve(nk);
            for (std::size_t p : picks) tokens.push_back(topic_keywords[t][p]);
            TextRecord rec;
            rec.id = padded_id("q", queries.size(), 6);
            rec.raw_text = join_tokens(tokens);
            rec.tokens = std::move(tokens);
            std::size_t rel_doc = t * spec.docs_per_topic + rng.below(spec.docs_per_topic);
            qrels.emplace_back(rec.id, docs[rel_doc].id);
            queries.push_back(std::move(rec));
        }
    }

    SyntheticData data;
    data.corpus = RecordStore(std::move(docs));
    data.queries = RecordStore(std::move(queries));
    data.qrels = std::move(qrels);
    return data;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return in;
}

[[noreturn]] void parse_error(const std::string& path, std::size_t line_no, const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

} // namespace

void save_records(const RecordStore& store, const std::string& path) {
    auto out = open_out(path);
    for (const auto& rec : store.records()) out << rec.id << '\t' << rec.raw_text << '\n';
}

RecordStore load_records(const std::string& path) {
    auto in = open_in(path);
    std::vector<TextRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) parse_error(path, line_no, "missing tab separator");
        if (tab == 0) parse_error(path, line_no, "empty record id");
        records.push_back(make_record(line.substr(0, tab), line.substr(tab + 1)));
    }
    return RecordStore(std::move(records));
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
    auto out = open_out(path);
    for (std::size_t i = 0; i < vocab.size(); ++i) out << vocab.token_at(i) << '\t' << i << '\n';
}

Vocabulary load_vocab(const std::string& path) {
    auto in = open_in(path);
    std::vector<std::pair<std::size_t, std::string>> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) parse_error(path, line_no, "missing tab separator");
        std::size_t index = 0;
        try {
            index = static_cast<std::size_t>(std::stoull(line.substr(tab + 1)));
        } catch (const std::exception&) {
            parse_error(path, line_no, "invalid index");
        }
        entries.emplace_back(index, line.substr(0, tab));
    }
    std::sort(entries.begin(), entries.end());
    std::vector<std::string> ordered;
    ordered.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].first != i)
            throw std::runtime_error(path + ": vocabulary indices not contiguous from 0");
        ordered.push_back(std::move(entries[i].second));
    }
    return Vocabulary(std::move(ordered));
}

void save_qrels(const std::vector<std::pair<std::string, std::string>>& qrels, const std::string& path) {
    auto out = open_out(path);
    for (const auto& [qid, did] : qrels) out << qid << '\t' << did << '\n';
}

std::vector<std::pair<std::string, std::string>> load_qrels(const std::string& path) {
    auto in = open_in(path);
    std::vector<std::pair<std::string, std::string>> qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) parse_error(path, line_no, "missing tab separator");
        qrels.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return qrels;
}

void save_store(const Store& store, const std::string& records_path, const std::string& vocab_path) {
    save_records(store.records, records_path);
    save_vocab(store.vocab, vocab_path);
}

Store load_store(const std::string& records_path, const std::string& vocab_path) {
    Store store;
    store.records = load_records(records_path);
    store.vocab = load_vocab(vocab_path);
    return store;
}

} // namespace area
