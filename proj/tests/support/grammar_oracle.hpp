#pragma once

// Test oracles for the parser: a brute-force derivation search over the
// original (non-CNF) productions, a random small-grammar generator, and a
// tree validity check.

#include <set>
#include <span>
#include <string>
#include <vector>

#include "handadapt/core/random.hpp"
#include "handadapt/nlu/grammar.hpp"
#include "handadapt/nlu/parser.hpp"

namespace handadapt::oracle {

/// True iff `sym` derives tokens[b, e). Tries every production and every way
/// of cutting the span into nonempty pieces, with no memoization. Requires a
/// grammar without unary cycles.
inline bool derives(const nlu::Grammar& g, const std::string& sym, std::span<const std::string> tokens, std::size_t b,
                    std::size_t e) {
    for (const auto& r : g.rules()) {
        if (r.lhs != sym) continue;
        if (g.is_lexical(r)) {
            if (e == b + 1 && tokens[b] == r.rhs[0]) return true;
            continue;
        }
        // Place the k pieces by recursion over cut positions.
        const std::size_t k = r.rhs.size();
        if (e - b < k) continue;
        std::vector<std::size_t> cut(k + 1);
        cut[0] = b;
        cut[k] = e;
        auto place = [&](auto&& self, std::size_t piece) -> bool {
            if (piece == k - 1) return derives(g, r.rhs[piece], tokens, cut[piece], e);
            for (std::size_t c = cut[piece] + 1; c + (k - 1 - piece) <= e; ++c) {
                if (!derives(g, r.rhs[piece], tokens, cut[piece], c)) continue;
                cut[piece + 1] = c;
                if (self(self, piece + 1)) return true;
            }
            return false;
        };
        if (place(place, 0)) return true;
    }
    return false;
}

inline bool brute_force_recognizes(const nlu::Grammar& g, std::span<const std::string> tokens) {
    return !tokens.empty() && derives(g, g.start(), tokens, 0, tokens.size());
}

/// Every internal node rewrites by some production and spans partition.
inline bool valid_derivation(const nlu::Grammar& g, const nlu::ParseTree& t) {
    if (t.lexical()) {
        for (const auto& r : g.rules())
            if (r.lhs == t.symbol && g.is_lexical(r) && r.rhs[0] == t.word) return t.end == t.begin + 1;
        return false;
    }
    std::vector<std::string> rhs;
    std::size_t pos = t.begin;
    for (const auto& c : t.children) {
        if (c.begin != pos || c.end <= c.begin) return false;
        pos = c.end;
        rhs.push_back(c.symbol);
        if (!valid_derivation(g, c)) return false;
    }
    if (pos != t.end) return false;
    for (const auto& r : g.rules())
        if (r.lhs == t.symbol && r.rhs == rhs) return true;
    return false;
}

inline const std::vector<std::string>& oracle_words() {
    static const std::vector<std::string> w{"x", "y", "z"};
    return w;
}

/// A random grammar over nonterminals S, A, B, C and words x, y, z with at
/// most `max_rules` productions. Redraws until it has no unary cycle.
inline nlu::Grammar random_grammar(Rng& rng, std::size_t max_rules = 20) {
    static const std::vector<std::string> nts{"S", "A", "B", "C"};
    for (;;) {
        std::vector<nlu::Production> rules;
        const std::size_t n = 6 + uniform_index(rng, max_rules - 5);
        // Every nonterminal gets one lexical rule so all symbols are productive.
        for (const auto& nt : nts) rules.push_back({nt, {oracle_words()[uniform_index(rng, 3)]}});
        while (rules.size() < n) {
            const auto& lhs = nts[uniform_index(rng, nts.size())];
            const double u = uniform01(rng);
            if (u < 0.2) {
                rules.push_back({lhs, {oracle_words()[uniform_index(rng, 3)]}});
            } else {
                const std::size_t len = u < 0.35 ? 1 : u < 0.8 ? 2 : 3;
                std::vector<std::string> rhs;
                for (std::size_t i = 0; i < len; ++i) rhs.push_back(nts[uniform_index(rng, nts.size())]);
                rules.push_back({lhs, rhs});
            }
        }
        // Shuffle so the start symbol's rules are not always first.
        shuffle(std::span<nlu::Production>(rules), rng);
        try {
            nlu::Grammar g("S", rules);
            nlu::CnfGrammar check(g);
            return g;
        } catch (const nlu::GrammarError&) {
        }
    }
}

inline std::vector<std::string> random_sentence(Rng& rng, std::size_t max_len = 6) {
    std::vector<std::string> s(1 + uniform_index(rng, max_len));
    for (auto& w : s) w = oracle_words()[uniform_index(rng, 3)];
    return s;
}

} // namespace handadapt::oracle
