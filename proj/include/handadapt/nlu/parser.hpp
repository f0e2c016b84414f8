#pragma once

// CYK chart parsing over a CnfGrammar.
//
// Each chart cell keeps one back-pointer per symbol: the derivation with the
// lowest rule priority, ties broken by the leftmost split. The binarized tree
// read off the chart is then de-binarized back to the grammar's own rules.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "handadapt/nlu/grammar.hpp"

namespace handadapt::nlu {

class ParseFailure : public Error {
public:
    enum class Kind { UnknownWord, NoDerivation };

    ParseFailure(Kind kind, std::string detail)
        : Error(kind == Kind::UnknownWord ? "parse failure: unknown word '" + detail + "'"
                                          : "parse failure: no derivation for '" + detail + "'"),
          kind_(kind), detail_(std::move(detail)) {}

    Kind kind() const { return kind_; }
    const std::string& detail() const { return detail_; }

private:
    Kind kind_;
    std::string detail_;
};

/// A node covers words [begin, end). Preterminal nodes carry their word and
/// have no children.
struct ParseTree {
    std::string symbol;
    std::size_t begin = 0, end = 0;
    std::string word;
    std::vector<ParseTree> children;

    bool lexical() const { return children.empty(); }

    std::vector<std::string> yield() const {
        std::vector<std::string> out;
        collect(out);
        return out;
    }

    std::size_t node_count() const {
        std::size_t n = 1;
        for (const auto& c : children) n += c.node_count();
        return n;
    }

    /// Bracketed form, e.g. "VP(VB perform, NP(DT a, NN grasp))".
    std::string to_string() const {
        if (lexical()) return symbol + " " + word;
        std::string s = symbol + "(";
        for (std::size_t i = 0; i < children.size(); ++i) s += (i ? ", " : "") + children[i].to_string();
        return s + ")";
    }

    /// Same tree without words, e.g. "VP(VB, NP(DT, NN))".
    std::string shape() const {
        if (lexical()) return symbol;
        std::string s = symbol + "(";
        for (std::size_t i = 0; i < children.size(); ++i) s += (i ? ", " : "") + children[i].shape();
        return s + ")";
    }

    friend bool operator==(const ParseTree&, const ParseTree&) = default;

private:
    void collect(std::vector<std::string>& out) const {
        if (lexical()) out.push_back(word);
        for (const auto& c : children) c.collect(out);
    }
};

/// Splices introduced binarization nodes into their parents. Idempotent.
inline ParseTree debinarize(const ParseTree& t) {
    ParseTree out{t.symbol, t.begin, t.end, t.word, {}};
    for (const auto& c : t.children) {
        ParseTree d = debinarize(c);
        if (CnfGrammar::introduced(d.symbol)) {
            for (auto& g : d.children) out.children.push_back(std::move(g));
        } else {
            out.children.push_back(std::move(d));
        }
    }
    return out;
}

class Parser {
public:
    explicit Parser(Grammar g) : grammar_(std::move(g)), cnf_(grammar_) {}

    const Grammar& grammar() const { return grammar_; }
    const CnfGrammar& cnf() const { return cnf_; }

    /// De-binarized tree rooted at the start symbol.
    ParseTree parse(std::span<const std::string> tokens) const { return debinarize(parse_binarized(tokens)); }
    ParseTree parse(std::string_view text) const {
        const auto t = tokenize(text);
        return parse(std::span<const std::string>(t));
    }

    /// The tree exactly as derived by the CNF rules (introduced symbols kept).
    ParseTree parse_binarized(std::span<const std::string> tokens) const {
        const auto chart = fill(tokens);
        const std::size_t n = tokens.size();
        if (n == 0 || !chart.at(0, n, cnf_.start()))
            throw ParseFailure(ParseFailure::Kind::NoDerivation, join(tokens));
        return build(chart, tokens, cnf_.start(), 0, n);
    }

    /// Recognition only; unknown words are simply not recognised.
    bool recognizes(std::span<const std::string> tokens) const {
        if (tokens.empty()) return false;
        for (const auto& w : tokens)
            if (cnf_.word_id(w) < 0) return false;
        const auto chart = fill(tokens);
        return chart.at(0, tokens.size(), cnf_.start()).has_value();
    }

private:
    struct Back {
        std::size_t rule = 0;
        std::size_t split = 0;
    };

    struct Chart {
        std::size_t n = 0, symbols = 0;
        std::vector<std::optional<Back>> cells;

        std::optional<Back>& at(std::size_t i, std::size_t j, int s) {
            return cells[(i * (n + 1) + j) * symbols + static_cast<std::size_t>(s)];
        }
        const std::optional<Back>& at(std::size_t i, std::size_t j, int s) const {
            return cells[(i * (n + 1) + j) * symbols + static_cast<std::size_t>(s)];
        }
    };

    static std::string join(std::span<const std::string> tokens) {
        std::string s;
        for (const auto& t : tokens) s += (s.empty() ? "" : " ") + t;
        return s;
    }

    Chart fill(std::span<const std::string> tokens) const {
        const std::size_t n = tokens.size();
        Chart c{n, cnf_.symbol_count(), {}};
        c.cells.assign((n + 1) * (n + 1) * c.symbols, std::nullopt);
        const auto& rules = cnf_.rules();
        for (std::size_t i = 0; i < n; ++i) {
            const int w = cnf_.word_id(tokens[i]);
            if (w < 0) throw ParseFailure(ParseFailure::Kind::UnknownWord, tokens[i]);
            for (std::size_t r = 0; r < rules.size(); ++r)
                if (rules[r].word == w && !c.at(i, i + 1, rules[r].lhs)) c.at(i, i + 1, rules[r].lhs) = Back{r, i + 1};
        }
        for (std::size_t len = 2; len <= n; ++len) {
            for (std::size_t i = 0; i + len <= n; ++i) {
                const std::size_t j = i + len;
                // Rules in priority order, splits left to right: first hit wins.
                for (std::size_t r = 0; r < rules.size(); ++r) {
                    const auto& rule = rules[r];
                    if (rule.lexical() || c.at(i, j, rule.lhs)) continue;
                    for (std::size_t k = i + 1; k < j; ++k) {
                        if (c.at(i, k, rule.left) && c.at(k, j, rule.right)) {
                            c.at(i, j, rule.lhs) = Back{r, k};
                            break;
                        }
                    }
                }
            }
        }
        return c;
    }

    ParseTree build(const Chart& c, std::span<const std::string> tokens, int sym, std::size_t i, std::size_t j) const {
        const Back b = *c.at(i, j, sym);
        const auto& rule = cnf_.rules()[b.rule];
        // Outermost node, then one node per folded unary step.
        ParseTree root{cnf_.name(sym), i, j, {}, {}};
        ParseTree* cur = &root;
        for (int s : rule.chain) {
            cur->children.push_back(ParseTree{cnf_.name(s), i, j, {}, {}});
            cur = &cur->children.back();
        }
        if (rule.lexical()) {
            cur->word = tokens[i];
        } else {
            cur->children.push_back(build(c, tokens, rule.left, i, b.split));
            cur->children.push_back(build(c, tokens, rule.right, b.split, j));
        }
        return root;
    }

    Grammar grammar_;
    CnfGrammar cnf_;
};

} // namespace handadapt::nlu
