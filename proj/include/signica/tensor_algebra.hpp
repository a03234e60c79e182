#pragma once

// Truncated free tensor algebra over the alphabet {1..d}: words, the
// concatenation and shuffle products, and exp/log of formal power series.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"

namespace signica {

/// A multi-index (i_1, ..., i_m) with letters in {1..d}; the empty word has m = 0.
class Word {
 public:
  Word() = default;
  Word(std::initializer_list<int> letters) : letters_(letters) {}
  explicit Word(std::vector<int> letters) : letters_(std::move(letters)) {}

  std::size_t size() const noexcept { return letters_.size(); }
  bool empty() const noexcept { return letters_.empty(); }
  int operator[](std::size_t k) const { return letters_[k]; }
  auto begin() const noexcept { return letters_.begin(); }
  auto end() const noexcept { return letters_.end(); }
  const std::vector<int>& letters() const noexcept { return letters_; }

  void push_back(int letter) { letters_.push_back(letter); }

  /// Number of occurrences of `letter`.
  std::size_t count(int letter) const {
    return static_cast<std::size_t>(std::count(letters_.begin(), letters_.end(), letter));
  }

  bool valid_for(std::size_t dim) const {
    return std::all_of(letters_.begin(), letters_.end(),
                       [dim](int l) { return l >= 1 && static_cast<std::size_t>(l) <= dim; });
  }

  friend Word operator+(const Word& u, const Word& v) {
    std::vector<int> w(u.letters_);
    w.insert(w.end(), v.letters_.begin(), v.letters_.end());
    return Word(std::move(w));
  }

  /// Shorter words first, then lexicographic.
  friend std::strong_ordering operator<=>(const Word& a, const Word& b) {
    if (a.size() != b.size()) return a.size() <=> b.size();
    return a.letters_ <=> b.letters_;
  }
  friend bool operator==(const Word& a, const Word& b) = default;

  /// Letters joined by dots; the empty word is the empty string.
  std::string to_string() const {
    std::string out;
    for (std::size_t k = 0; k < letters_.size(); ++k) {
      if (k) out += '.';
      out += std::to_string(letters_[k]);
    }
    return out;
  }

  static Word parse(const std::string& text) {
    Word w;
    if (text.empty()) return w;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t dot = std::min(text.find('.', pos), text.size());
      const std::string tok = text.substr(pos, dot - pos);
      if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        throw ValidationError("word", "malformed word '" + text + "'");
      w.push_back(std::stoi(tok));
      pos = dot + 1;
    }
    return w;
  }

 private:
  std::vector<int> letters_;
};

/// All order-preserving interleavings of u and v, with multiplicity
/// (C(|u|+|v|, |u|) words). Ordered by the positions taken by u, lexicographically.
inline std::vector<Word> shuffle(const Word& u, const Word& v) {
  const std::size_t m = u.size(), n = v.size(), total = m + n;
  std::vector<Word> out;
  // `take[k]` true means position k is filled from u.
  std::vector<bool> take(total, false);
  std::fill(take.begin(), take.begin() + static_cast<std::ptrdiff_t>(m), true);
  // prev_permutation over a sorted-descending boolean mask enumerates every
  // m-subset of positions exactly once.
  do {
    std::vector<int> w;
    w.reserve(total);
    std::size_t iu = 0, iv = 0;
    for (std::size_t k = 0; k < total; ++k) w.push_back(take[k] ? u[iu++] : v[iv++]);
    out.emplace_back(std::move(w));
  } while (std::prev_permutation(take.begin(), take.end()));
  return out;
}

/// Enumerates all words of length `m` over {1..dim} in lexicographic order.
inline std::vector<Word> words_of_length(std::size_t dim, std::size_t m) {
  std::vector<Word> out;
  std::vector<int> letters(m, 1);
  for (;;) {
    out.emplace_back(letters);
    std::size_t k = m;
    while (k > 0 && static_cast<std::size_t>(letters[k - 1]) == dim) letters[--k] = 1;
    if (k == 0) break;
    ++letters[k - 1];
  }
  return out;
}

/// Truncated formal power series sum_w c_w w over words of length <= depth.
///
/// Storage is dense per level: level m holds d^m coefficients, words indexed in
/// lexicographic order (index = sum_k (i_k - 1) d^(m-k)). Products silently drop
/// terms beyond the truncation depth.
class TensorSeries {
 public:
  TensorSeries(std::size_t dim, std::size_t depth) : dim_(dim), depth_(depth) {
    if (dim == 0) throw ValidationError("d", "alphabet size must be positive");
    if (depth == 0) throw ValidationError("depth", "truncation depth must be positive");
    levels_.resize(depth + 1);
    std::size_t size = 1;
    for (std::size_t m = 0; m <= depth; ++m) {
      levels_[m].assign(size, 0.0);
      size *= dim;
    }
  }

  /// The unit series epsilon (empty-word coefficient 1, everything else 0).
  static TensorSeries unit(std::size_t dim, std::size_t depth) {
    TensorSeries s(dim, depth);
    s.levels_[0][0] = 1.0;
    return s;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t depth() const noexcept { return depth_; }

  std::span<const double> level(std::size_t m) const { return levels_.at(m); }
  std::span<double> level(std::size_t m) { return levels_.at(m); }

  double empty_coefficient() const noexcept { return levels_[0][0]; }

  /// Coefficient of `w`; zero for words longer than the depth.
  double operator[](const Word& w) const {
    check_letters(w);
    if (w.size() > depth_) return 0.0;
    return levels_[w.size()][index_of(w)];
  }

  /// Mutable coefficient of `w`; the word must fit in the truncation.
  double& at(const Word& w) {
    check_letters(w);
    if (w.size() > depth_) throw ValidationError("word", "length exceeds truncation depth");
    return levels_[w.size()][index_of(w)];
  }

  std::size_t index_of(const Word& w) const {
    std::size_t idx = 0;
    for (int l : w) idx = idx * dim_ + static_cast<std::size_t>(l - 1);
    return idx;
  }

  Word word_at(std::size_t m, std::size_t idx) const {
    std::vector<int> letters(m);
    for (std::size_t k = m; k-- > 0;) {
      letters[k] = static_cast<int>(idx % dim_) + 1;
      idx /= dim_;
    }
    return Word(std::move(letters));
  }

  TensorSeries& operator+=(const TensorSeries& o) {
    require_compatible(o);
    for (std::size_t m = 0; m <= depth_; ++m)
      for (std::size_t i = 0; i < levels_[m].size(); ++i) levels_[m][i] += o.levels_[m][i];
    return *this;
  }
  TensorSeries& operator-=(const TensorSeries& o) {
    require_compatible(o);
    for (std::size_t m = 0; m <= depth_; ++m)
      for (std::size_t i = 0; i < levels_[m].size(); ++i) levels_[m][i] -= o.levels_[m][i];
    return *this;
  }
  TensorSeries& operator*=(double c) {
    for (auto& lvl : levels_)
      for (double& x : lvl) x *= c;
    return *this;
  }

  friend TensorSeries operator+(TensorSeries a, const TensorSeries& b) { return a += b; }
  friend TensorSeries operator-(TensorSeries a, const TensorSeries& b) { return a -= b; }
  friend TensorSeries operator*(TensorSeries a, double c) { return a *= c; }
  friend TensorSeries operator*(double c, TensorSeries a) { return a *= c; }

  /// Largest coefficient-wise absolute difference.
  double max_abs_diff(const TensorSeries& o) const {
    require_compatible(o);
    double worst = 0.0;
    for (std::size_t m = 0; m <= depth_; ++m)
      for (std::size_t i = 0; i < levels_[m].size(); ++i)
        worst = std::max(worst, std::abs(levels_[m][i] - o.levels_[m][i]));
    return worst;
  }

  void require_compatible(const TensorSeries& o) const {
    if (dim_ != o.dim_ || depth_ != o.depth_)
      throw DimensionMismatch("tensor series differ in alphabet size or depth");
  }

  friend bool operator==(const TensorSeries&, const TensorSeries&) = default;

 private:
  void check_letters(const Word& w) const {
    if (!w.valid_for(dim_)) throw ValidationError("word", "letter outside {1..d}: " + w.to_string());
  }

  std::size_t dim_;
  std::size_t depth_;
  std::vector<std::vector<double>> levels_;
};

/// Concatenation product: (a*b)(w) = sum over splittings w = u.v of a(u) b(v).
inline TensorSeries concat_product(const TensorSeries& a, const TensorSeries& b) {
  a.require_compatible(b);
  const std::size_t d = a.dim(), depth = a.depth();
  TensorSeries out(d, depth);
  for (std::size_t m = 0; m <= depth; ++m) {
    auto dst = out.level(m);
    std::size_t right_size = 1;
    for (std::size_t r = 0; r < m; ++r) right_size *= d;
    // k letters from a, m - k from b; right_size tracks d^(m-k).
    for (std::size_t k = 0; k <= m; ++k) {
      const auto left = a.level(k);
      const auto right = b.level(m - k);
      for (std::size_t iu = 0; iu < left.size(); ++iu) {
        const double x = left[iu];
        if (x == 0.0) continue;
        double* row = dst.data() + iu * right_size;
        for (std::size_t iv = 0; iv < right_size; ++iv) row[iv] += x * right[iv];
      }
      right_size /= d;
    }
  }
  return out;
}

inline TensorSeries operator*(const TensorSeries& a, const TensorSeries& b) {
  return concat_product(a, b);
}

/// exp(a) = sum_{m<=depth} a^{*m} / m!. Requires a zero empty-word coefficient.
inline TensorSeries exp_series(const TensorSeries& a) {
  if (a.empty_coefficient() != 0.0)
    throw ValidationError("series", "exp requires a zero empty-word coefficient");
  TensorSeries result = TensorSeries::unit(a.dim(), a.depth());
  TensorSeries term = result;
  for (std::size_t m = 1; m <= a.depth(); ++m) {
    term = concat_product(term, a);
    term *= 1.0 / static_cast<double>(m);
    result += term;
  }
  return result;
}

/// log(a) = sum_{m<=depth} (-1)^{m-1}/m (a - eps)^{*m}. Requires empty-word coefficient 1.
inline TensorSeries log_series(const TensorSeries& a) {
  if (std::abs(a.empty_coefficient() - 1.0) > 1e-12)
    throw ValidationError("series", "log requires an empty-word coefficient equal to 1");
  TensorSeries x = a;
  x.level(0)[0] = 0.0;
  TensorSeries result(a.dim(), a.depth());
  TensorSeries power = x;
  for (std::size_t m = 1; m <= a.depth(); ++m) {
    const double c = (m % 2 == 1 ? 1.0 : -1.0) / static_cast<double>(m);
    result += power * c;
    if (m < a.depth()) power = concat_product(power, x);
  }
  return result;
}

// JSON form: {"d":int,"depth":int,"coeffs":{"1.2":float,...,"":float}}.
// Every stored coefficient is written; absent keys read back as zero.
inline nlohmann::json to_json(const TensorSeries& s) {
  nlohmann::json coeffs = nlohmann::json::object();
  for (std::size_t m = 0; m <= s.depth(); ++m) {
    const auto lvl = s.level(m);
    for (std::size_t i = 0; i < lvl.size(); ++i) coeffs[s.word_at(m, i).to_string()] = lvl[i];
  }
  return {{"d", s.dim()}, {"depth", s.depth()}, {"coeffs", coeffs}};
}

inline TensorSeries tensor_series_from_json(const nlohmann::json& j) {
  if (!j.contains("d") || !j.contains("depth"))
    throw ValidationError("series", "missing d or depth");
  TensorSeries s(j.at("d").get<std::size_t>(), j.at("depth").get<std::size_t>());
  if (j.contains("coeffs")) {
    for (const auto& [key, value] : j.at("coeffs").items()) s.at(Word::parse(key)) = value.get<double>();
  }
  return s;
}

}  // namespace signica
