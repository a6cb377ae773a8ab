#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fefm/errors.hpp"

namespace fefm {

enum class FieldKind { Categorical, Numeric };

// Declared per-field value transform, applied before vocabulary lookup.
//   none       — identity
//   hour24     — parse integer, reduce modulo 24 (Avazu-style YYMMDDHH stamps)
//   discretize — parse number, floor to integer (default for numeric fields)
enum class Transform { None, Hour24, Discretize };

struct FieldSchema {
    std::string name;
    FieldKind kind = FieldKind::Categorical;
    Transform transform = Transform::None;
    bool dropped = false;
};

// One raw example: string value per schema field (same order), plus the label.
struct RawRow {
    std::string label;
    std::vector<std::string> values;
};

struct Instance {
    int label = 1;                 // +1 click, -1 no-click
    std::vector<int32_t> active;   // active[f] = feature id of field f
};

struct Dataset {
    std::vector<Instance> instances;
    int n = 0;        // fields
    int64_t m = 0;    // features
    int64_t size() const { return static_cast<int64_t>(instances.size()); }
};

class Vocabulary {
public:
    std::vector<FieldSchema> fields;
    // per non-dropped field position: transformed value -> feature id
    std::vector<std::unordered_map<std::string, int32_t>> index;
    std::vector<int64_t> frequencies;     // per feature id (training counts)
    std::vector<int32_t> unknown_ids;     // per field position
    std::vector<int32_t> owner;           // feature id -> field position
    // sorted retained integer levels per field (numeric fields only)
    std::vector<std::vector<int64_t>> numeric_levels;

    int n() const { return static_cast<int>(fields.size()); }
    int64_t m() const { return static_cast<int64_t>(owner.size()); }
};

inline int parse_label(const std::string& s) {
    if (s == "1" || s == "+1") return 1;
    if (s == "0" || s == "-1") return -1;
    throw DataError("unrecognized label value '" + s + "'");
}

inline std::optional<int64_t> parse_integer(const std::string& s) {
    if (s.empty()) return std::nullopt;
    try {
        size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

// Applies the field's declared transform. Empty input means missing
// (nullopt); unparseable numeric input throws.
inline std::optional<std::string> apply_transform(const FieldSchema& field, const std::string& raw) {
    if (raw.empty()) return std::nullopt;
    switch (field.transform) {
        case Transform::None:
            if (field.kind == FieldKind::Numeric) {
                // numeric default is integer discretization
                try {
                    size_t pos = 0;
                    double x = std::stod(raw, &pos);
                    if (pos != raw.size()) throw DataError("");
                    return std::to_string(static_cast<int64_t>(std::floor(x)));
                } catch (const std::exception&) {
                    throw DataError("unparseable numeric value '" + raw + "' in field " + field.name);
                }
            }
            return raw;
        case Transform::Hour24: {
            auto v = parse_integer(raw);
            if (!v) throw DataError("unparseable hour value '" + raw + "' in field " + field.name);
            int64_t h = *v % 24;
            if (h < 0) h += 24;
            return std::to_string(h);
        }
        case Transform::Discretize: {
            try {
                size_t pos = 0;
                double x = std::stod(raw, &pos);
                if (pos != raw.size()) throw DataError("");
                return std::to_string(static_cast<int64_t>(std::floor(x)));
            } catch (const std::exception&) {
                throw DataError("unparseable numeric value '" + raw + "' in field " + field.name);
            }
        }
    }
    return raw;
}

// Single pass over the training rows: count transformed values per field,
// keep those at or above min_frequency, allocate contiguous ids field by
// field in first-appearance order with the field's unknown id last.
inline Vocabulary build_vocabulary(const std::vector<RawRow>& rows,
                                   const std::vector<FieldSchema>& schema,
                                   int64_t min_frequency) {
    if (rows.empty()) throw DataError("empty input stream");
    if (min_frequency < 1) throw ConfigError("min_frequency must be >= 1");
    {
        std::unordered_map<std::string, int> seen;
        for (const auto& f : schema)
            if (++seen[f.name] > 1) throw ConfigError("duplicate field name '" + f.name + "'");
    }

    Vocabulary vocab;
    vocab.fields = schema;
    const int n = static_cast<int>(schema.size());
    vocab.index.resize(n);
    vocab.unknown_ids.assign(n, -1);
    vocab.numeric_levels.resize(n);

    std::vector<std::unordered_map<std::string, int64_t>> counts(n);
    std::vector<std::vector<std::string>> order(n);  // first-appearance order
    for (const auto& row : rows) {
        if (static_cast<int>(row.values.size()) != n)
            throw DataError("row has " + std::to_string(row.values.size()) + " values, schema has " +
                            std::to_string(n) + " fields");
        for (int f = 0; f < n; ++f) {
            if (schema[f].dropped) continue;
            auto value = apply_transform(schema[f], row.values[f]);
            if (!value) continue;
            auto [it, fresh] = counts[f].try_emplace(*value, 0);
            if (fresh) order[f].push_back(*value);
            ++it->second;
        }
    }

    for (int f = 0; f < n; ++f) {
        if (schema[f].dropped) {
            vocab.unknown_ids[f] = -1;
            continue;
        }
        for (const auto& value : order[f]) {
            int64_t c = counts[f].at(value);
            if (c < min_frequency) continue;
            int32_t id = static_cast<int32_t>(vocab.owner.size());
            vocab.index[f].emplace(value, id);
            vocab.owner.push_back(f);
            vocab.frequencies.push_back(c);
            if (schema[f].kind == FieldKind::Numeric)
                if (auto level = parse_integer(value)) vocab.numeric_levels[f].push_back(*level);
        }
        std::sort(vocab.numeric_levels[f].begin(), vocab.numeric_levels[f].end());
        // reserved unknown id, last in the field's block
        vocab.unknown_ids[f] = static_cast<int32_t>(vocab.owner.size());
        vocab.owner.push_back(f);
        vocab.frequencies.push_back(0);
    }
    return vocab;
}

// Nearest retained integer level, ties to the smaller value.
inline int64_t nearest_level(const std::vector<int64_t>& levels, int64_t x) {
    auto it = std::lower_bound(levels.begin(), levels.end(), x);
    if (it == levels.begin()) return *it;
    if (it == levels.end()) return levels.back();
    int64_t hi = *it, lo = *std::prev(it);
    return (x - lo <= hi - x) ? lo : hi;
}

inline Instance encode_instance(const RawRow& row, const Vocabulary& vocab) {
    if (row.label.empty()) throw DataError("missing label");
    Instance inst;
    inst.label = parse_label(row.label);
    const int n = vocab.n();
    if (static_cast<int>(row.values.size()) != n) throw DataError("row/schema width mismatch");
    for (int f = 0; f < n; ++f) {
        const auto& field = vocab.fields[f];
        if (field.dropped) continue;
        auto value = apply_transform(field, row.values[f]);
        int32_t id = vocab.unknown_ids[f];
        if (value) {
            auto it = vocab.index[f].find(*value);
            if (it != vocab.index[f].end()) {
                id = it->second;
            } else if (field.kind == FieldKind::Numeric && !vocab.numeric_levels[f].empty()) {
                if (auto x = parse_integer(*value)) {
                    int64_t level = nearest_level(vocab.numeric_levels[f], *x);
                    id = vocab.index[f].at(std::to_string(level));
                }
            }
        }
        inst.active.push_back(id);
    }
    return inst;
}

// Active positions follow non-dropped fields only; a dataset's field count.
inline int active_field_count(const Vocabulary& vocab) {
    int c = 0;
    for (const auto& f : vocab.fields)
        if (!f.dropped) ++c;
    return c;
}

inline Dataset encode_dataset(const std::vector<RawRow>& rows, const Vocabulary& vocab) {
    Dataset ds;
    ds.n = active_field_count(vocab);
    ds.m = vocab.m();
    ds.instances.reserve(rows.size());
    for (const auto& row : rows) ds.instances.push_back(encode_instance(row, vocab));
    return ds;
}

// Seeded uniform shuffle, then contiguous partition. Val and test get
// floor(ratio*N); the remainder goes to train.
inline std::array<Dataset, 3> split_dataset(const Dataset& ds, double train_ratio, double val_ratio,
                                            double test_ratio, uint64_t seed) {
    if (train_ratio <= 0 || val_ratio <= 0 || test_ratio <= 0)
        throw ConfigError("split ratios must be positive");
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");
    if (ds.instances.empty()) throw DataError("cannot split an empty dataset");

    const int64_t N = ds.size();
    std::vector<int64_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    const int64_t n_val = static_cast<int64_t>(std::floor(val_ratio * static_cast<double>(N)));
    const int64_t n_test = static_cast<int64_t>(std::floor(test_ratio * static_cast<double>(N)));
    const int64_t n_train = N - n_val - n_test;

    std::array<Dataset, 3> out;
    for (auto& d : out) {
        d.n = ds.n;
        d.m = ds.m;
    }
    for (int64_t i = 0; i < N; ++i) {
        const Instance& inst = ds.instances[perm[i]];
        if (i < n_train)
            out[0].instances.push_back(inst);
        else if (i < n_train + n_val)
            out[1].instances.push_back(inst);
        else
            out[2].instances.push_back(inst);
    }
    return out;
}

// ---- libffm-style interchange: "label field:feature:1" ----

inline std::pair<int, std::vector<std::pair<int32_t, int32_t>>> parse_libffm_line(const std::string& line,
                                                                                  int n) {
    std::istringstream in(line);
    std::string tok;
    if (!(in >> tok)) throw DataError("empty line");
    int label = parse_label(tok);
    std::vector<std::pair<int32_t, int32_t>> pairs;
    std::vector<bool> seen(n, false);
    while (in >> tok) {
        size_t c1 = tok.find(':');
        size_t c2 = (c1 == std::string::npos) ? std::string::npos : tok.find(':', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw DataError("malformed token '" + tok + "'");
        int64_t field, feature, value;
        try {
            field = std::stoll(tok.substr(0, c1));
            feature = std::stoll(tok.substr(c1 + 1, c2 - c1 - 1));
            value = std::stoll(tok.substr(c2 + 1));
        } catch (const std::exception&) {
            throw DataError("malformed token '" + tok + "'");
        }
        if (value != 1) throw DataError("value must be 1 in token '" + tok + "'");
        if (field < 0 || field >= n) throw DataError("field index " + std::to_string(field) + " out of range");
        if (feature < 0) throw DataError("negative feature id");
        if (seen[field]) throw DataError("duplicate field " + std::to_string(field));
        seen[field] = true;
        pairs.emplace_back(static_cast<int32_t>(field), static_cast<int32_t>(feature));
    }
    return {label, std::move(pairs)};
}

inline Dataset read_libffm(std::istream& in, int n, int64_t m) {
    Dataset ds;
    ds.n = n;
    ds.m = m;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto [label, pairs] = parse_libffm_line(line, n);
        if (static_cast<int>(pairs.size()) != n)
            throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(n) +
                            " active features, got " + std::to_string(pairs.size()));
        Instance inst;
        inst.label = label;
        inst.active.assign(n, -1);
        for (auto [f, feat] : pairs) {
            if (feat >= m) throw DataError("feature id out of range on line " + std::to_string(lineno));
            inst.active[f] = feat;
        }
        ds.instances.push_back(std::move(inst));
    }
    if (ds.instances.empty()) throw DataError("no instances in libffm input");
    return ds;
}

inline Dataset read_libffm_file(const std::string& path, int n, int64_t m) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return read_libffm(in, n, m);
}

inline void write_libffm(std::ostream& out, const Dataset& ds) {
    for (const auto& inst : ds.instances) {
        out << (inst.label > 0 ? 1 : 0);
        for (int f = 0; f < ds.n; ++f) out << ' ' << f << ':' << inst.active[f] << ":1";
        out << '\n';
    }
}

// ---- vocabulary persistence (versioned text format) ----

inline void save_vocabulary(std::ostream& out, const Vocabulary& vocab) {
    out << "FEFMVOCAB 1\n";
    out << "n " << vocab.n() << " m " << vocab.m() << "\n";
    for (int f = 0; f < vocab.n(); ++f) {
        const auto& field = vocab.fields[f];
        const char* kind = field.kind == FieldKind::Numeric ? "numeric" : "categorical";
        const char* tr = field.transform == Transform::Hour24     ? "hour24"
                         : field.transform == Transform::Discretize ? "discretize"
                                                                    : "-";
        out << "field " << f << ' ' << kind << ' ' << tr << ' ' << (field.dropped ? 1 : 0) << ' '
            << vocab.unknown_ids[f] << ' ' << field.name << "\n";
    }
    // invert index for ordered emission; value goes last so it may contain spaces
    std::vector<std::pair<int32_t, std::string>> values(vocab.m(), {-1, ""});
    for (int f = 0; f < vocab.n(); ++f)
        for (const auto& [value, id] : vocab.index[f]) values[id] = {f, value};
    for (int64_t id = 0; id < vocab.m(); ++id) {
        out << "feature " << id << ' ' << vocab.owner[id] << ' ' << vocab.frequencies[id];
        if (values[id].first >= 0)
            out << ' ' << values[id].second;
        else
            out << " \t<unk>";
        out << "\n";
    }
}

inline Vocabulary load_vocabulary(std::istream& in) {
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "FEFMVOCAB" || version != 1)
        throw DataError("not a vocabulary file (bad header)");
    std::string key;
    int n = 0;
    int64_t m = 0;
    in >> key >> n >> key >> m;
    Vocabulary vocab;
    vocab.fields.resize(n);
    vocab.index.resize(n);
    vocab.unknown_ids.assign(n, -1);
    vocab.numeric_levels.resize(n);
    vocab.owner.assign(m, -1);
    vocab.frequencies.assign(m, 0);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string rec;
        ls >> rec;
        if (rec == "field") {
            int f, dropped, unknown;
            std::string kind, tr, name;
            ls >> f >> kind >> tr >> dropped >> unknown;
            std::getline(ls, name);
            if (!name.empty() && name.front() == ' ') name.erase(0, 1);
            vocab.fields[f].name = name;
            vocab.fields[f].kind = (kind == "numeric") ? FieldKind::Numeric : FieldKind::Categorical;
            vocab.fields[f].transform = (tr == "hour24")       ? Transform::Hour24
                                        : (tr == "discretize") ? Transform::Discretize
                                                               : Transform::None;
            vocab.fields[f].dropped = dropped != 0;
            vocab.unknown_ids[f] = unknown;
        } else if (rec == "feature") {
            int64_t id, freq;
            int f;
            std::string value;
            ls >> id >> f >> freq;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            vocab.owner[id] = f;
            vocab.frequencies[id] = freq;
            if (value != "\t<unk>") {
                vocab.index[f].emplace(value, static_cast<int32_t>(id));
                if (vocab.fields[f].kind == FieldKind::Numeric)
                    if (auto level = parse_integer(value)) vocab.numeric_levels[f].push_back(*level);
            }
        } else {
            throw DataError("unrecognized vocabulary record '" + rec + "'");
        }
    }
    for (auto& levels : vocab.numeric_levels) std::sort(levels.begin(), levels.end());
    return vocab;
}

// ---- delimited text ingestion ----

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// Header row names the columns; `label_column` is pulled out, the rest must
// match schema field names exactly (any order).
inline std::vector<RawRow> read_delimited(std::istream& in, const std::vector<FieldSchema>& schema,
                                          const std::string& label_column, char delim) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_line(line, delim);
    const int n = static_cast<int>(schema.size());
    std::vector<int> col_to_field(header.size(), -1);
    int label_col = -1;
    for (size_t c = 0; c < header.size(); ++c) {
        if (header[c] == label_column) {
            label_col = static_cast<int>(c);
            continue;
        }
        int match = -1;
        for (int f = 0; f < n; ++f)
            if (schema[f].name == header[c]) match = f;
        if (match < 0) throw DataError("column '" + header[c] + "' not covered by schema");
        col_to_field[c] = match;
    }
    if (label_col < 0) throw DataError("label column '" + label_column + "' not found");

    std::vector<RawRow> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_line(line, delim);
        if (cells.size() != header.size()) throw DataError("row width differs from header");
        RawRow row;
        row.values.assign(n, "");
        for (size_t c = 0; c < cells.size(); ++c) {
            if (static_cast<int>(c) == label_col)
                row.label = cells[c];
            else
                row.values[col_to_field[c]] = std::move(cells[c]);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace fefm
