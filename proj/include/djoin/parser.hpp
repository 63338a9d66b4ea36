#pragma once

#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "djoin/query.hpp"

namespace djoin {

namespace detail {

struct Token {
    enum class Kind { Ident, Int, String, Punct, End };
    Kind kind;
    std::string text;
    int64_t int_val = 0;
    size_t pos = 0;
};

class Lexer {
  public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }

    Token next() {
        Token t = tok_;
        advance();
        return t;
    }

  private:
    void advance() {
        while (i_ < src_.size() && isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
        tok_.pos = i_;
        if (i_ >= src_.size()) {
            tok_ = {Token::Kind::End, "", 0, i_};
            return;
        }
        char c = src_[i_];
        if (isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t j = i_;
            while (j < src_.size() &&
                   (isalnum(static_cast<unsigned char>(src_[j])) || src_[j] == '_'))
                ++j;
            tok_ = {Token::Kind::Ident, src_.substr(i_, j - i_), 0, i_};
            i_ = j;
            return;
        }
        if (isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && i_ + 1 < src_.size() && isdigit(static_cast<unsigned char>(src_[i_ + 1])))) {
            size_t j = i_ + 1;
            while (j < src_.size() && isdigit(static_cast<unsigned char>(src_[j]))) ++j;
            Token t{Token::Kind::Int, src_.substr(i_, j - i_), 0, i_};
            t.int_val = std::stoll(t.text);
            tok_ = t;
            i_ = j;
            return;
        }
        if (c == '\'' || c == '"') {
            size_t j = i_ + 1;
            while (j < src_.size() && src_[j] != c) ++j;
            if (j >= src_.size()) throw SyntaxError("unterminated string literal", i_);
            tok_ = {Token::Kind::String, src_.substr(i_ + 1, j - i_ - 1), 0, i_};
            i_ = j + 1;
            return;
        }
        // Multi-char operators first.
        for (const char* op : {"<=", ">=", "!="}) {
            if (src_.compare(i_, 2, op) == 0) {
                tok_ = {Token::Kind::Punct, op, 0, i_};
                i_ += 2;
                return;
            }
        }
        if (std::string("<>=,()*").find(c) != std::string::npos) {
            tok_ = {Token::Kind::Punct, std::string(1, c), 0, i_};
            ++i_;
            return;
        }
        throw SyntaxError(std::string("unexpected character '") + c + "'", i_);
    }

    const std::string& src_;
    size_t i_ = 0;
    Token tok_;
};

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(tolower(static_cast<unsigned char>(c)));
    return s;
}

inline bool is_keyword(const Token& t, const char* kw) {
    return t.kind == Token::Kind::Ident && lower(t.text) == kw;
}

}  // namespace detail

/// Parses the query grammar
///   query := SELECT ('*' | varlist) FROM atom (',' atom)* [WHERE pred (AND pred)*]
///   atom  := ident '(' varlist ')'
///   pred  := ident op (ident | literal), op in { <, <=, >, >=, !=, = }
/// Keywords are case-insensitive. An explicit a=b between two variables is
/// rewritten into variable unification, so equality joins are always
/// expressed through shared variable names.
inline Gcq parse_query(const std::string& text) {
    using detail::Token;
    detail::Lexer lex(text);

    auto expect_punct = [&](const char* p) {
        Token t = lex.next();
        if (t.kind != Token::Kind::Punct || t.text != p)
            throw SyntaxError(std::string("expected '") + p + "'", t.pos);
    };
    auto expect_ident = [&]() {
        Token t = lex.next();
        if (t.kind != Token::Kind::Ident) throw SyntaxError("expected identifier", t.pos);
        return t;
    };

    Token t = lex.next();
    if (!detail::is_keyword(t, "select")) throw SyntaxError("expected SELECT", t.pos);

    bool star = false;
    std::vector<std::string> out_vars;
    if (lex.peek().kind == Token::Kind::Punct && lex.peek().text == "*") {
        lex.next();
        star = true;
    } else {
        out_vars.push_back(expect_ident().text);
        while (lex.peek().kind == Token::Kind::Punct && lex.peek().text == ",") {
            lex.next();
            out_vars.push_back(expect_ident().text);
        }
    }

    t = lex.next();
    if (!detail::is_keyword(t, "from")) throw SyntaxError("expected FROM", t.pos);

    Gcq q;
    while (true) {
        Token name = expect_ident();
        expect_punct("(");
        AtomOccurrence atom;
        atom.relation = name.text;
        atom.arg_vars.push_back(expect_ident().text);
        while (lex.peek().kind == Token::Kind::Punct && lex.peek().text == ",") {
            lex.next();
            atom.arg_vars.push_back(expect_ident().text);
        }
        expect_punct(")");
        q.atoms.push_back(std::move(atom));
        if (lex.peek().kind == Token::Kind::Punct && lex.peek().text == ",") {
            lex.next();
            continue;
        }
        break;
    }

    // var -> var equalities collected for unification.
    std::vector<std::pair<std::string, std::string>> unify;
    std::vector<std::tuple<std::string, CmpOp, Token>> raw_preds;

    if (detail::is_keyword(lex.peek(), "where")) {
        lex.next();
        while (true) {
            Token lhs = expect_ident();
            Token op = lex.next();
            if (op.kind != Token::Kind::Punct) throw SyntaxError("expected comparison", op.pos);
            Token rhs = lex.next();
            if (op.text == "=") {
                if (rhs.kind != Token::Kind::Ident)
                    throw SyntaxError("equality with a constant is not supported; "
                                      "use shared variables for equijoins",
                                      rhs.pos);
                unify.emplace_back(lhs.text, rhs.text);
            } else {
                CmpOp o;
                if (op.text == "<")
                    o = CmpOp::Lt;
                else if (op.text == "<=")
                    o = CmpOp::Le;
                else if (op.text == ">")
                    o = CmpOp::Gt;
                else if (op.text == ">=")
                    o = CmpOp::Ge;
                else if (op.text == "!=")
                    o = CmpOp::Ne;
                else
                    throw SyntaxError("unknown operator " + op.text, op.pos);
                if (rhs.kind != Token::Kind::Ident && rhs.kind != Token::Kind::Int &&
                    rhs.kind != Token::Kind::String)
                    throw SyntaxError("expected variable or literal", rhs.pos);
                raw_preds.emplace_back(lhs.text, o, rhs);
            }
            if (detail::is_keyword(lex.peek(), "and")) {
                lex.next();
                continue;
            }
            break;
        }
    }

    Token end = lex.next();
    if (end.kind != Token::Kind::End) throw SyntaxError("trailing input", end.pos);

    // Resolve unification: map every variable to the lexicographically
    // smallest member of its equality class.
    std::map<std::string, std::string> rep;
    std::function<std::string(const std::string&)> find = [&](const std::string& v) {
        auto it = rep.find(v);
        if (it == rep.end() || it->second == v) return v;
        std::string r = find(it->second);
        rep[v] = r;
        return r;
    };
    for (const auto& [a, b] : unify) {
        std::string ra = find(a), rb = find(b);
        if (ra == rb) continue;
        if (rb < ra) std::swap(ra, rb);
        rep[rb] = ra;
    }
    auto subst = [&](const std::string& v) { return find(v); };

    for (auto& a : q.atoms)
        for (auto& v : a.arg_vars) v = subst(v);
    for (auto& [lhs, op, rhs] : raw_preds) {
        lhs = subst(lhs);
        if (rhs.kind == Token::Kind::Ident) rhs.text = subst(rhs.text);
    }
    if (star) {
        q.out = q.all_vars();
    } else {
        std::vector<std::string> mapped;
        for (auto& v : out_vars) mapped.push_back(subst(v));
        q.out = Hyperedge(mapped);
    }

    for (const auto& [lhs, op, rhs] : raw_preds) {
        if (rhs.kind == Token::Kind::Ident) {
            if (lhs == rhs.text) throw ScopeError("predicate compares a variable with itself");
            q.preds.insert(Predicate::var_cmp_var(lhs, op, rhs.text));
        } else if (rhs.kind == Token::Kind::Int) {
            q.preds.insert(Predicate::var_cmp_const(lhs, op, Value(rhs.int_val)));
        } else {
            q.preds.insert(Predicate::var_cmp_const(lhs, op, Value(rhs.text)));
        }
    }

    q.validate();
    return q;
}

/// Inverse pretty-printer. parse_query(render_query(q)) == q for any query
/// expressible in the grammar (opaque predicates render for display only).
inline std::string render_query(const Gcq& q) {
    std::string s = "SELECT ";
    const auto& ov = q.out.vars();
    if (ov.empty()) {
        s += "*";  // only the all-nullary-atom query has an empty output
    } else {
        for (size_t i = 0; i < ov.size(); ++i) {
            if (i) s += ",";
            s += ov[i];
        }
    }
    s += " FROM ";
    for (size_t i = 0; i < q.atoms.size(); ++i) {
        if (i) s += ", ";
        s += q.atoms[i].str();
    }
    if (!q.preds.empty()) {
        s += " WHERE ";
        bool first = true;
        for (const auto& p : q.preds) {
            if (!first) s += " AND ";
            first = false;
            s += p.str();
        }
    }
    return s;
}

inline std::string Gcq::str() const { return render_query(*this); }

}  // namespace djoin
