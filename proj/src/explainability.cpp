#include "affect/explainability.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "affect/nn.hpp"

namespace affect {

std::vector<double> shapley_exact(const ValueFunction& v, std::size_t n) {
  if (n > kMaxExactFeatures)
    throw OracleSizeError("exact Shapley enumeration supports at most " + std::to_string(kMaxExactFeatures) +
                          " features, got " + std::to_string(n) + "; use the permutation estimator");
  const std::size_t subsets = std::size_t{1} << n;
  std::vector<double> values(subsets);
  std::vector<bool> mask(n);
  for (std::size_t s = 0; s < subsets; ++s) {
    for (std::size_t i = 0; i < n; ++i) mask[i] = (s >> i) & 1U;
    values[s] = v(mask);
  }
  // weight[k] = k! (n-k-1)! / n!
  std::vector<double> weight(n, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    weight[k] = std::exp(std::lgamma(static_cast<double>(k) + 1) + std::lgamma(static_cast<double>(n - k)) -
                         std::lgamma(static_cast<double>(n) + 1));
  std::vector<double> phi(n, 0.0);
  for (std::size_t s = 0; s < subsets; ++s) {
    const auto k = static_cast<std::size_t>(std::popcount(s));
    for (std::size_t i = 0; i < n; ++i)
      if (!((s >> i) & 1U)) phi[i] += weight[k] * (values[s | (std::size_t{1} << i)] - values[s]);
  }
  return phi;
}

ValueFunction background_value_function(HybridFunction f, std::size_t num_background) {
  if (num_background == 0) throw Error("background set is empty");
  return [f = std::move(f), num_background](const std::vector<bool>& coalition) {
    double sum = 0.0;
    for (std::size_t b = 0; b < num_background; ++b) sum += f(coalition, b);
    return sum / static_cast<double>(num_background);
  };
}

std::vector<double> shapley_permutation(const HybridFunction& f, std::size_t n, std::size_t num_background,
                                        const PermutationOptions& opts) {
  if (num_background == 0) throw Error("background set is empty");
  if (opts.num_permutations == 0) throw Error("num_permutations must be positive");
  std::vector<double> phi(n, 0.0);
  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<bool> mask(n);
  auto walk = [&](const std::vector<std::size_t>& order, std::size_t b) {
    std::fill(mask.begin(), mask.end(), false);
    double prev = f(mask, b);
    for (std::size_t i : order) {
      mask[i] = true;
      const double cur = f(mask, b);
      phi[i] += cur - prev;
      prev = cur;
    }
  };
  std::size_t done = 0;
  for (std::size_t k = 0; done < opts.num_permutations; ++k) {
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
    const std::size_t b = k % num_background;
    walk(perm, b);
    ++done;
    if (opts.antithetic && done < opts.num_permutations) {
      walk(std::vector<std::size_t>(perm.rbegin(), perm.rend()), b);
      ++done;
    }
  }
  for (auto& p : phi) p /= static_cast<double>(done);
  return phi;
}

HybridFunction model_hybrid(const FusionModel& model, std::vector<FeatureToken> sample,
                            std::vector<std::vector<FeatureToken>> background) {
  if (background.empty()) throw Error("background set is empty");
  for (const auto& b : background) {
    if (b.size() != sample.size()) throw DimensionError("background sample has a different token count");
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b[i].feature_id != sample[i].feature_id)
        throw DimensionError("background tokens are not in the sample's layout");
  }
  return [&model, sample = std::move(sample), background = std::move(background)](
             const std::vector<bool>& coalition, std::size_t b) {
    std::vector<FeatureToken> mixed = background[b];
    for (std::size_t i = 0; i < mixed.size(); ++i)
      if (coalition[i]) mixed[i] = sample[i];
    return nn::sigmoid(model.logit(mixed));
  };
}

std::vector<Attribution> shapley_sample(const FusionModel& model, const FeatureSchema& schema,
                                        std::span<const FeatureToken> sample,
                                        std::span<const std::vector<FeatureToken>> background,
                                        const PermutationOptions& opts, const std::string& sample_ref) {
  const auto f = model_hybrid(model, {sample.begin(), sample.end()}, {background.begin(), background.end()});
  const auto phi = shapley_permutation(f, sample.size(), background.size(), opts);
  // Keep names in first-seen (canonical token) order.
  std::vector<Attribution> out;
  std::map<std::string, std::size_t> slot;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto name = model.layout().base_name(sample[i].feature_id, schema);
    auto [it, inserted] = slot.emplace(name, out.size());
    if (inserted) {
      out.push_back({sample_ref, name, 0.0, 0.0});
      counts.push_back(0);
    }
    out[it->second].shapley_value += phi[i];
    out[it->second].feature_value += sample[i].value;
    ++counts[it->second];
  }
  for (std::size_t k = 0; k < out.size(); ++k) out[k].feature_value /= static_cast<double>(counts[k]);
  return out;
}

std::vector<std::size_t> select_background(std::size_t available, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(available);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  const std::size_t take = std::min(count, available);
  for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng() % (available - i)]);
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> start_token_attention(const TextEncoder& encoder, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw DimensionError("cannot score an empty token sequence");
  nn::Tape tape(false);
  std::vector<nn::Matrix> heads;
  encoder.encode(tape, tokens, nn::ForwardContext{}, &heads);
  const auto n = static_cast<std::size_t>(heads.front().cols());
  std::vector<double> out(n > 0 ? n - 1 : 0, 0.0);
  double total = 0.0;
  for (std::size_t j = 1; j < n; ++j) {
    if (tokens[j] == Tokenizer::kSeparator || tokens[j] == Tokenizer::kStart) continue;
    double a = 0.0;
    for (const auto& h : heads) a += h(0, static_cast<Eigen::Index>(j));
    out[j - 1] = a / static_cast<double>(heads.size());
    total += out[j - 1];
  }
  if (total > 0.0)
    for (auto& a : out) a /= total;
  return out;
}

namespace {

bool is_punctuation_word(std::string_view w) {
  return std::none_of(w.begin(), w.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || std::isalnum(u) != 0;
  });
}

}  // namespace

std::vector<KeywordScore> attention_keyword_scores(const TextEncoder& encoder, std::span<const DiaryEntry> corpus,
                                                   std::size_t top_k, std::size_t min_occurrences) {
  if (!encoder.fine_tuned()) throw Error("keyword attention needs a stage-1 fine-tuned encoder");
  if (corpus.empty()) throw Error("keyword attention: empty corpus");
  const auto& tok = encoder.tokenizer();
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& entry : corpus) {
    const auto ids = tok.tokenize(entry.text);
    if (ids.size() < 2) continue;
    const auto words = Tokenizer::split_words(entry.text);
    const auto att = start_token_attention(encoder, ids);
    for (std::size_t j = 1; j < ids.size(); ++j) {
      const auto& word = words[j - 1];
      if (ids[j] == Tokenizer::kSeparator || is_punctuation_word(word)) continue;
      auto& [sum, count] = acc[word];
      sum += att[j - 1];
      ++count;
    }
  }
  std::vector<KeywordScore> scores;
  for (const auto& [word, sc] : acc)
    if (sc.second >= min_occurrences)
      scores.push_back({word, sc.first / static_cast<double>(sc.second), sc.second});
  std::sort(scores.begin(), scores.end(), [](const KeywordScore& a, const KeywordScore& b) {
    if (a.mean_attention != b.mean_attention) return a.mean_attention > b.mean_attention;
    return a.keyword < b.keyword;
  });
  if (scores.size() > top_k) scores.resize(top_k);
  return scores;
}

std::vector<std::pair<std::string, double>> feature_importance(std::span<const Attribution> attributions) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& a : attributions) {
    auto& [sum, n] = acc[a.feature_name];
    sum += std::abs(a.shapley_value);
    ++n;
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [name, v] : acc) out.emplace_back(name, v.first / static_cast<double>(v.second));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

// Horizontal bar chart, one bar per (label, value), drawn in the given order.
std::string bar_chart_svg(const std::string& title, const std::vector<std::pair<std::string, double>>& bars) {
  const int label_w = 220, bar_w = 360, row_h = 22, top = 40;
  const int height = top + row_h * static_cast<int>(bars.size()) + 20;
  double max_v = 0.0;
  for (const auto& [_, v] : bars) max_v = std::max(max_v, std::abs(v));
  if (max_v <= 0.0) max_v = 1.0;
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(label_w + bar_w + 80) +
                    "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<text x=\"10\" y=\"22\" font-size=\"14\">" + xml_escape(title) + "</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const int y = top + row_h * static_cast<int>(i);
    const double w = bar_w * std::abs(bars[i].second) / max_v;
    svg += "<text x=\"" + std::to_string(label_w - 6) + "\" y=\"" + std::to_string(y + 14) +
           "\" text-anchor=\"end\">" + xml_escape(bars[i].first) + "</text>\n";
    svg += "<rect class=\"bar\" data-label=\"" + xml_escape(bars[i].first) + "\" x=\"" + std::to_string(label_w) +
           "\" y=\"" + std::to_string(y + 3) + "\" width=\"" + fmt(w, 6) + "\" height=\"" +
           std::to_string(row_h - 6) + "\" fill=\"#4c72b0\"/>\n";
    svg += "<text x=\"" + fmt(label_w + w + 4, 6) + "\" y=\"" + std::to_string(y + 14) + "\">" +
           fmt(bars[i].second) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace

ReportFiles export_attribution_report(std::span<const Attribution> attributions,
                                      std::span<const KeywordScore> keywords,
                                      const std::filesystem::path& output_dir) {
  if (attributions.empty()) throw Error("attribution report: no attributions to export");
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) throw Error("cannot create report directory " + output_dir.string() + ": " + ec.message());

  ReportFiles files;
  files.attributions_csv = output_dir / "attributions.csv";
  files.features_svg = output_dir / "feature_importance.svg";
  std::string csv = "sample_ref,feature_name,feature_value,shapley_value\n";
  for (const auto& a : attributions)
    csv += csv_escape(a.sample_ref) + "," + csv_escape(a.feature_name) + "," + format_double(a.feature_value) +
           "," + format_double(a.shapley_value) + "\n";
  write_file_atomic(files.attributions_csv, csv);
  write_file_atomic(files.features_svg,
                    bar_chart_svg("Mean |Shapley value| per feature", feature_importance(attributions)));

  if (keywords.empty()) {
    files.warnings.push_back("no keyword scores; keyword section omitted");
    return files;
  }
  files.keywords_csv = output_dir / "keywords.csv";
  files.keywords_svg = output_dir / "keyword_attention.svg";
  std::string kw = "keyword,mean_attention,occurrences\n";
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& k : keywords) {
    kw += csv_escape(k.keyword) + "," + format_double(k.mean_attention) + "," + std::to_string(k.occurrences) + "\n";
    bars.emplace_back(k.keyword, k.mean_attention);
  }
  write_file_atomic(files.keywords_csv, kw);
  write_file_atomic(files.keywords_svg, bar_chart_svg("Mean attention per keyword", bars));
  return files;
}

}  // namespace affect
