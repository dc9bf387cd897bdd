#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "reval/dataset.hpp"

namespace testutil {

inline reval::Interaction row(const std::string& u, const std::string& i, double r) {
    return {u, i, r, std::nullopt};
}

inline reval::Interaction row(const std::string& u, const std::string& i, double r,
                              std::int64_t ts) {
    return {u, i, r, ts};
}

inline reval::Dataset make_dataset(std::vector<reval::Interaction> rows,
                                   reval::RatingScale scale = reval::RatingScale::bounded(1, 5)) {
    return reval::Dataset(std::move(rows), scale, "fixture");
}

// the two users of the worked mean-policy example: u1 rates i1..i4, u2 rates
// i1..i3 and i5
inline reval::Dataset mean_policy_fixture() {
    return make_dataset({
        row("u1", "i1", 5),
        row("u1", "i2", 3),
        row("u1", "i3", 4),
        row("u1", "i4", 4),
        row("u2", "i1", 3),
        row("u2", "i2", 1),
        row("u2", "i3", 2),
        row("u2", "i5", 3),
    });
}

inline reval::Dataset parse_tsv(const std::string& text,
                                reval::RatingScale scale = reval::RatingScale::bounded(1, 5),
                                reval::DedupPolicy dedup = reval::DedupPolicy::keep_all,
                                bool with_timestamp = false) {
    std::istringstream in(text);
    reval::ColumnSchema schema;
    if (with_timestamp) schema.timestamp_col = 3;
    return reval::parse_dataset(in, schema, scale, dedup);
}

} // namespace testutil
