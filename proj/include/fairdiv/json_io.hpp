#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fairdiv/core.hpp"

namespace fairdiv {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using json = nlohmann::json;

inline json instance_to_json(const Instance& inst) {
    json rows = json::array();
    for (int k = 0; k < inst.items(); ++k) {
        json row = json::array();
        for (int i = 0; i < inst.agents(); ++i) row.push_back(inst.value(k, i));
        rows.push_back(std::move(row));
    }
    json j{{"n", inst.agents()}, {"m", inst.items()}, {"values", std::move(rows)}};
    if (inst.meta()) {
        const InstanceMeta& m = *inst.meta();
        json params = json::object();
        for (const auto& [k, v] : m.params) params[k] = v;
        j["meta"] = json{{"dist", m.dist}, {"params", std::move(params)}, {"seed", m.seed}};
    }
    return j;
}

inline Instance instance_from_json(const json& j) {
    try {
        const int n = j.at("n").get<int>();
        const int m = j.at("m").get<int>();
        const json& rows = j.at("values");
        if (!rows.is_array() || static_cast<int>(rows.size()) != m)
            throw DataError("instance: values must hold m rows");
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(n) * m);
        for (const json& row : rows) {
            if (!row.is_array() || static_cast<int>(row.size()) != n)
                throw DataError("instance: each row must hold n entries");
            for (const json& x : row) v.push_back(x.get<double>());
        }
        std::optional<InstanceMeta> meta;
        if (j.contains("meta")) {
            InstanceMeta m2;
            const json& jm = j.at("meta");
            m2.dist = jm.value("dist", std::string{});
            m2.seed = jm.value("seed", std::uint64_t{0});
            if (jm.contains("params"))
                for (auto it = jm.at("params").begin(); it != jm.at("params").end(); ++it)
                    m2.params[it.key()] = it.value().get<double>();
            meta = std::move(m2);
        }
        return Instance(n, m, std::move(v), std::move(meta));
    } catch (const json::exception& e) {
        throw DataError(std::string("instance: malformed JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("instance: ") + e.what());
    }
}

inline json allocation_to_json(const DiscreteAllocation& alloc) {
    return json{{"owner", alloc.owner}};
}

inline json allocation_to_json(const FractionalAllocation& frac) {
    json rows = json::array();
    for (int k = 0; k < frac.m; ++k) {
        json row = json::array();
        for (int i = 0; i < frac.n; ++i) row.push_back(frac.at(k, i));
        rows.push_back(std::move(row));
    }
    return json{{"probs", std::move(rows)}};
}

inline bool json_is_discrete_allocation(const json& j) { return j.contains("owner"); }

inline DiscreteAllocation discrete_allocation_from_json(const json& j) {
    try {
        DiscreteAllocation a;
        a.owner = j.at("owner").get<std::vector<int>>();
        return a;
    } catch (const json::exception& e) {
        throw DataError(std::string("allocation: malformed JSON: ") + e.what());
    }
}

inline FractionalAllocation fractional_allocation_from_json(const json& j) {
    try {
        const json& rows = j.at("probs");
        FractionalAllocation f;
        f.m = static_cast<int>(rows.size());
        if (f.m == 0) throw DataError("allocation: probs must be nonempty");
        f.n = static_cast<int>(rows.at(0).size());
        for (const json& row : rows) {
            if (static_cast<int>(row.size()) != f.n)
                throw DataError("allocation: ragged probs rows");
            for (const json& x : row) f.probs.push_back(x.get<double>());
        }
        return f;
    } catch (const json::exception& e) {
        throw DataError(std::string("allocation: malformed JSON: ") + e.what());
    }
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return j;
}

inline void save_json_file(const std::string& path, const json& j, int indent = 2) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << j.dump(indent) << '\n';
}

} // namespace fairdiv
