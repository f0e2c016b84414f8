#pragma once

// Context-free grammar as data, and its CNF compilation.
//
// Text format, one production per line:
//
//   # comment
//   start VP
//   VP -> VB NP
//   NP -> DT JJ NN
//   VB -> perform | do
//
// A right-hand-side token is a nonterminal iff it appears as some left-hand
// side; every other token is a word. Words may only appear alone on a right
// hand side. The start symbol defaults to the first left-hand side.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "handadapt/core/config.hpp"
#include "handadapt/core/types.hpp"

namespace handadapt::nlu {

class GrammarError : public Error {
public:
    using Error::Error;
};

/// Lowercase, drop punctuation, split on whitespace.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else if (std::isalnum(c) || c == '\'' || c == '-' || c >= 0x80) {
            if (c != '\'') cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

struct Production {
    std::string lhs;
    std::vector<std::string> rhs;
    friend bool operator==(const Production&, const Production&) = default;
};

class Grammar {
public:
    Grammar(std::string start, std::vector<Production> rules) : start_(std::move(start)), rules_(std::move(rules)) {
        validate();
    }

    static Grammar from_text(std::string_view text) {
        std::vector<Production> rules;
        std::string start;
        std::istringstream in{std::string(text)};
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto toks = split_ws(line);
            if (toks.empty()) continue;
            if (toks[0] == "start") {
                if (toks.size() != 2) throw GrammarError("line " + std::to_string(lineno) + ": expected 'start SYMBOL'");
                start = toks[1];
                continue;
            }
            if (toks.size() < 3 || toks[1] != "->")
                throw GrammarError("line " + std::to_string(lineno) + ": expected 'LHS -> RHS ...'");
            std::vector<std::string> alt;
            for (std::size_t i = 2; i <= toks.size(); ++i) {
                if (i == toks.size() || toks[i] == "|") {
                    if (alt.empty()) throw GrammarError("line " + std::to_string(lineno) + ": empty alternative");
                    rules.push_back({toks[0], std::move(alt)});
                    alt.clear();
                } else {
                    alt.push_back(toks[i]);
                }
            }
        }
        if (rules.empty()) throw GrammarError("grammar has no productions");
        if (start.empty()) start = rules.front().lhs;
        return Grammar(std::move(start), std::move(rules));
    }

    static Grammar load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw GrammarError("cannot open grammar '" + path.string() + "'");
        std::ostringstream s;
        s << in.rdbuf();
        return from_text(s.str());
    }

    std::string to_text() const {
        std::string out = "start " + start_ + "\n";
        for (const auto& r : rules_) {
            out += r.lhs + " ->";
            for (const auto& s : r.rhs) out += " " + s;
            out += "\n";
        }
        return out;
    }

    const std::string& start() const { return start_; }
    const std::vector<Production>& rules() const { return rules_; }
    bool is_nonterminal(const std::string& s) const { return nonterminals_.count(s) != 0; }
    bool knows_word(const std::string& w) const { return words_.count(w) != 0; }
    const std::set<std::string>& words() const { return words_; }

    /// A preterminal (part-of-speech tag) rewrites only to single words.
    bool is_preterminal(const std::string& s) const { return preterminals_.count(s) != 0; }

    bool is_lexical(const Production& r) const { return r.rhs.size() == 1 && !is_nonterminal(r.rhs[0]); }

private:
    void validate() {
        for (const auto& r : rules_) {
            if (r.lhs.empty() || r.lhs[0] == '@') throw GrammarError("invalid nonterminal '" + r.lhs + "'");
            nonterminals_.insert(r.lhs);
        }
        if (!is_nonterminal(start_)) throw GrammarError("start symbol '" + start_ + "' has no productions");
        std::set<std::string> phrasal;
        for (const auto& r : rules_) {
            if (r.rhs.empty()) throw GrammarError("empty production for '" + r.lhs + "'");
            if (is_lexical(r)) {
                words_.insert(r.rhs[0]);
                continue;
            }
            phrasal.insert(r.lhs);
            for (const auto& s : r.rhs)
                if (!is_nonterminal(s))
                    throw GrammarError("word '" + s + "' in rule for '" + r.lhs +
                                       "' must be alone on its right-hand side");
        }
        for (const auto& n : nonterminals_)
            if (!phrasal.count(n)) preterminals_.insert(n);
    }

    std::string start_;
    std::vector<Production> rules_;
    std::set<std::string> nonterminals_;
    std::set<std::string> preterminals_;
    std::set<std::string> words_;
};

/// Chomsky normal form of a Grammar.
///
/// Rules of length k > 2 are split into a right-branching chain through
/// introduced symbols named "@<rule>.<position>". Unary rules A -> B are
/// folded into every non-unary rule reachable from B; `chain` keeps the
/// folded symbols so the original tree can be rebuilt.
class CnfGrammar {
public:
    struct Rule {
        int lhs = -1;
        int left = -1, right = -1; ///< binary rule children
        int word = -1;             ///< lexical rule word id
        std::vector<int> chain;    ///< symbols below lhs that unary rules passed through
        std::vector<std::size_t> priority; ///< source rule indices, outermost first

        bool lexical() const { return word >= 0; }
    };

    explicit CnfGrammar(const Grammar& g) {
        for (const auto& r : g.rules()) symbol(r.lhs);
        start_ = symbol(g.start());
        for (const auto& w : g.words()) words_.emplace(w, static_cast<int>(words_.size()));
        word_names_.resize(words_.size());
        for (const auto& [w, id] : words_) word_names_[static_cast<std::size_t>(id)] = w;

        // Base rules (no unary nonterminal rules yet), binarized.
        std::vector<Rule> base;
        std::map<int, std::vector<std::pair<int, std::size_t>>> unary; // A -> [(B, source)]
        for (std::size_t i = 0; i < g.rules().size(); ++i) {
            const auto& r = g.rules()[i];
            const int lhs = symbol(r.lhs);
            if (g.is_lexical(r)) {
                base.push_back(Rule{lhs, -1, -1, words_.at(r.rhs[0]), {}, {i}});
            } else if (r.rhs.size() == 1) {
                unary[lhs].emplace_back(symbol(r.rhs[0]), i);
            } else {
                int cur = lhs;
                for (std::size_t k = 0; k + 2 < r.rhs.size(); ++k) {
                    const int next = symbol("@" + std::to_string(i) + "." + std::to_string(k + 1));
                    base.push_back(Rule{cur, symbol(r.rhs[k]), next, -1, {}, {i}});
                    cur = next;
                }
                base.push_back(Rule{cur, symbol(r.rhs[r.rhs.size() - 2]), symbol(r.rhs.back()), -1, {}, {i}});
            }
        }

        // Unary closure: for each A, every chain A -> B1 -> ... -> Bm.
        struct Path {
            std::vector<int> symbols; // B1..Bm
            std::vector<std::size_t> sources;
        };
        for (int a = 0; a < static_cast<int>(names_.size()); ++a) {
            std::vector<Path> paths{{}};
            for (std::size_t p = 0; p < paths.size(); ++p) {
                const int tail = paths[p].symbols.empty() ? a : paths[p].symbols.back();
                auto it = unary.find(tail);
                if (it == unary.end()) continue;
                for (const auto& [b, src] : it->second) {
                    if (b == a || std::find(paths[p].symbols.begin(), paths[p].symbols.end(), b) !=
                                      paths[p].symbols.end())
                        throw GrammarError("unary cycle through '" + names_[static_cast<std::size_t>(b)] + "'");
                    Path q = paths[p];
                    q.symbols.push_back(b);
                    q.sources.push_back(src);
                    paths.push_back(std::move(q));
                }
            }
            for (const auto& path : paths) {
                const int bottom = path.symbols.empty() ? a : path.symbols.back();
                for (const auto& r : base) {
                    if (r.lhs != bottom) continue;
                    Rule c = r;
                    c.lhs = a;
                    c.chain = path.symbols;
                    c.priority = path.sources;
                    c.priority.insert(c.priority.end(), r.priority.begin(), r.priority.end());
                    rules_.push_back(std::move(c));
                }
            }
        }
        std::stable_sort(rules_.begin(), rules_.end(),
                         [](const Rule& x, const Rule& y) { return x.priority < y.priority; });
    }

    int start() const { return start_; }
    const std::vector<Rule>& rules() const { return rules_; }
    std::size_t symbol_count() const { return names_.size(); }
    const std::string& name(int s) const { return names_.at(static_cast<std::size_t>(s)); }
    static bool introduced(const std::string& name) { return !name.empty() && name[0] == '@'; }

    /// Word id, or -1 for a word outside the lexicon.
    int word_id(const std::string& w) const {
        auto it = words_.find(w);
        return it == words_.end() ? -1 : it->second;
    }
    const std::string& word(int id) const { return word_names_.at(static_cast<std::size_t>(id)); }

private:
    int symbol(const std::string& name) {
        auto [it, inserted] = ids_.emplace(name, static_cast<int>(names_.size()));
        if (inserted) names_.push_back(name);
        return it->second;
    }

    int start_ = -1;
    std::map<std::string, int> ids_;
    std::vector<std::string> names_;
    std::map<std::string, int> words_;
    std::vector<std::string> word_names_;
    std::vector<Rule> rules_;
};

} // namespace handadapt::nlu
