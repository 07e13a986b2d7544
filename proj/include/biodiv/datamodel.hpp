#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace biodiv {

using Count = std::uint64_t;
inline constexpr Count max_count = static_cast<Count>(std::numeric_limits<std::int64_t>::max());

/// Abundance multiset with its sufficient statistics.
class PartitionData {
public:
    PartitionData() = default;

    explicit PartitionData(std::vector<Count> abundances) : abundances_(std::move(abundances)) {
        std::sort(abundances_.begin(), abundances_.end(), std::greater<>());
        for (Count a : abundances_) {
            if (a == 0) throw domain_error("PartitionData: abundances must be positive");
            if (a > max_count - n_) throw domain_error("PartitionData: total count overflows");
            n_ += a;
            ++freq_counts_[a];
        }
    }

    /// Sorted descending.
    const std::vector<Count>& abundances() const { return abundances_; }
    Count n() const { return n_; }
    std::size_t k() const { return abundances_.size(); }
    const std::map<Count, Count>& freq_counts() const { return freq_counts_; }
    Count m(Count r) const {
        auto it = freq_counts_.find(r);
        return it == freq_counts_.end() ? 0 : it->second;
    }

    friend bool operator==(const PartitionData& a, const PartitionData& b) { return a.abundances_ == b.abundances_; }

private:
    std::vector<Count> abundances_;
    Count n_ = 0;
    std::map<Count, Count> freq_counts_;
};

/// Running distinct-count trajectory (i, K_i), i = 1..n.
template <class Range>
std::vector<std::pair<std::size_t, std::size_t>> accumulate(const Range& stream) {
    using Label = std::decay_t<decltype(*std::begin(stream))>;
    std::unordered_set<Label> seen;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t i = 0;
    for (const auto& label : stream) {
        seen.insert(label);
        out.emplace_back(++i, seen.size());
    }
    return out;
}

/// Reduces an observation stream to its partition.
template <class Range>
PartitionData partition_of(const Range& stream) {
    using Label = std::decay_t<decltype(*std::begin(stream))>;
    std::unordered_map<Label, Count> counts;
    for (const auto& label : stream) ++counts[label];
    std::vector<Count> ab;
    ab.reserve(counts.size());
    for (const auto& [label, c] : counts) ab.push_back(c);
    return PartitionData(std::move(ab));
}

struct TaxonNode {
    std::string label;
    Count count = 0;
    std::vector<TaxonNode> children;

    std::size_t k() const { return children.size(); }
};

/// Rooted L-level tree; depth-1 nodes are level-1 taxa, leaves sit at depth L.
class TaxonomicDataset {
public:
    using Path = std::vector<std::string>;

    TaxonomicDataset() = default;

    /// Aggregates (path, count) rows; identical paths are summed.
    static TaxonomicDataset from_rows(const std::vector<std::pair<Path, Count>>& rows, std::size_t levels) {
        if (levels < 2) throw domain_error("TaxonomicDataset: at least two levels are needed");
        if (rows.empty()) throw parse_error("TaxonomicDataset: no rows");
        TaxonomicDataset ds;
        ds.levels_ = levels;
        std::vector<std::unordered_map<std::string, std::string>> parent_of(levels);
        for (const auto& [path, count] : rows) {
            if (path.size() != levels) throw parse_error("TaxonomicDataset: row depth does not match levels");
            if (count == 0) throw domain_error("TaxonomicDataset: leaf counts must be positive");
            for (std::size_t l = 0; l < levels; ++l) {
                if (path[l].empty()) throw parse_error("TaxonomicDataset: empty label");
                const std::string parent = l == 0 ? std::string() : path[l - 1];
                auto [it, fresh] = parent_of[l].emplace(path[l], parent);
                if (!fresh && it->second != parent)
                    throw inconsistent_nesting("inconsistent nesting: label '" + path[l] + "' appears under '" +
                                               it->second + "' and '" + parent + "'");
            }
        }
        Builder root;
        for (const auto& [path, count] : rows) {
            Builder* node = &root;
            if (count > max_count - node->count) throw domain_error("TaxonomicDataset: total count overflows");
            node->count += count;
            for (const auto& label : path) {
                auto [it, fresh] = node->kids.try_emplace(label);
                if (fresh) {
                    it->second = std::make_unique<Builder>();
                    node->order.push_back(label);
                }
                node = it->second.get();
                node->count += count;
            }
        }
        ds.root_ = root.finish("");
        return ds;
    }

    std::size_t levels() const { return levels_; }
    const TaxonNode& root() const { return root_; }
    Count n() const { return root_.count; }

    /// Nodes at depth `level` (1-based), in insertion order.
    std::vector<const TaxonNode*> nodes_at(std::size_t level) const {
        std::vector<const TaxonNode*> cur{&root_};
        for (std::size_t l = 0; l < level; ++l) {
            std::vector<const TaxonNode*> next;
            for (const TaxonNode* x : cur)
                for (const auto& c : x->children) next.push_back(&c);
            cur = std::move(next);
        }
        return cur;
    }

    /// Number of distinct taxa at `level`.
    std::size_t k_at(std::size_t level) const { return nodes_at(level).size(); }

    /// Flattened (path, leaf count) rows, depth-first.
    std::vector<std::pair<Path, Count>> rows() const {
        std::vector<std::pair<Path, Count>> out;
        Path path;
        std::function<void(const TaxonNode&)> walk = [&](const TaxonNode& x) {
            if (x.children.empty()) {
                out.emplace_back(path, x.count);
                return;
            }
            for (const auto& c : x.children) {
                path.push_back(c.label);
                walk(c);
                path.pop_back();
            }
        };
        walk(root_);
        return out;
    }

    /// Checks count consistency at every internal node.
    bool consistent() const {
        std::function<bool(const TaxonNode&, std::size_t)> ok = [&](const TaxonNode& x, std::size_t depth) {
            if (depth == levels_) return x.children.empty() && x.count >= 1;
            if (x.children.empty()) return false;
            Count s = 0;
            for (const auto& c : x.children) {
                if (!ok(c, depth + 1)) return false;
                s += c.count;
            }
            return s == x.count;
        };
        return ok(root_, 0);
    }

private:
    struct Builder {
        Count count = 0;
        std::vector<std::string> order;
        std::unordered_map<std::string, std::unique_ptr<Builder>> kids;

        TaxonNode finish(const std::string& label) const {
            TaxonNode x{label, count, {}};
            x.children.reserve(order.size());
            for (const auto& c : order) x.children.push_back(kids.at(c)->finish(c));
            return x;
        }
    };

    std::size_t levels_ = 0;
    TaxonNode root_;
};

namespace csv {

struct Row {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

inline std::vector<std::string> split(const std::string& line, std::size_t lineno) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw parse_error("line " + std::to_string(lineno) + ": unterminated quote");
    out.push_back(std::move(cur));
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

/// Header plus data rows; blank lines and '#' comment lines are skipped.
inline std::pair<Row, std::vector<Row>> read(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    Row header;
    std::vector<Row> rows;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
        Row r{lineno, split(line, lineno)};
        if (!have_header) {
            header = std::move(r);
            have_header = true;
        } else {
            rows.push_back(std::move(r));
        }
    }
    if (!have_header) throw parse_error("empty file");
    return {std::move(header), std::move(rows)};
}

inline Count parse_count(const std::string& s, std::size_t lineno) {
    Count v = 0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end || s.empty())
        throw parse_error("line " + std::to_string(lineno) + ": count '" + s + "' is not a nonnegative integer");
    if (v == 0) throw parse_error("line " + std::to_string(lineno) + ": count must be positive");
    if (v > max_count) throw parse_error("line " + std::to_string(lineno) + ": count exceeds 2^63-1");
    return v;
}

inline std::ifstream open(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open '" + path + "'");
    return in;
}

}  // namespace csv

/// Reads `taxon,count` rows.
inline PartitionData read_abundance_csv(std::istream& in) {
    auto [header, rows] = csv::read(in);
    if (header.fields != std::vector<std::string>{"taxon", "count"})
        throw parse_error("line " + std::to_string(header.line) + ": expected header 'taxon,count'");
    if (rows.empty()) throw parse_error("empty file: no data rows");
    std::unordered_set<std::string> seen;
    std::vector<Count> ab;
    ab.reserve(rows.size());
    for (const auto& r : rows) {
        if (r.fields.size() != 2) throw parse_error("line " + std::to_string(r.line) + ": expected 2 fields");
        if (r.fields[0].empty()) throw parse_error("line " + std::to_string(r.line) + ": empty taxon label");
        if (!seen.insert(r.fields[0]).second)
            throw parse_error("line " + std::to_string(r.line) + ": duplicate taxon '" + r.fields[0] + "'");
        ab.push_back(csv::parse_count(r.fields[1], r.line));
    }
    return PartitionData(std::move(ab));
}

inline PartitionData ingest_abundance_csv(const std::string& path) {
    auto in = csv::open(path);
    return read_abundance_csv(in);
}

/// Reads `level1,...,levelL,count` rows.
inline TaxonomicDataset read_taxonomy_csv(std::istream& in, std::size_t levels) {
    auto [header, rows] = csv::read(in);
    std::vector<std::string> expected;
    for (std::size_t l = 1; l <= levels; ++l) expected.push_back("level" + std::to_string(l));
    expected.push_back("count");
    if (header.fields != expected)
        throw parse_error("line " + std::to_string(header.line) + ": expected header 'level1,...,level" +
                          std::to_string(levels) + ",count'");
    if (rows.empty()) throw parse_error("empty file: no data rows");
    std::vector<std::pair<TaxonomicDataset::Path, Count>> parsed;
    parsed.reserve(rows.size());
    for (const auto& r : rows) {
        if (r.fields.size() != levels + 1)
            throw parse_error("line " + std::to_string(r.line) + ": expected " + std::to_string(levels + 1) + " fields");
        TaxonomicDataset::Path path(r.fields.begin(), r.fields.end() - 1);
        for (const auto& f : path)
            if (f.empty()) throw parse_error("line " + std::to_string(r.line) + ": empty label");
        parsed.emplace_back(std::move(path), csv::parse_count(r.fields.back(), r.line));
    }
    return TaxonomicDataset::from_rows(parsed, levels);
}

inline TaxonomicDataset ingest_taxonomy_csv(const std::string& path, std::size_t levels) {
    auto in = csv::open(path);
    return read_taxonomy_csv(in, levels);
}

inline void write_abundance_csv(std::ostream& out, const PartitionData& data) {
    out << "taxon,count\n";
    std::size_t i = 0;
    for (Count a : data.abundances()) out << "t" << ++i << ',' << a << '\n';
}

inline void write_taxonomy_csv(std::ostream& out, const TaxonomicDataset& data) {
    for (std::size_t l = 1; l <= data.levels(); ++l) out << "level" << l << ',';
    out << "count\n";
    for (const auto& [path, count] : data.rows()) {
        for (const auto& p : path) out << p << ',';
        out << count << '\n';
    }
}

}  // namespace biodiv
