#include "trustrec/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "trustrec/errors.hpp"
#include "trustrec/rng.hpp"

namespace trustrec {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void check_finite(const Matrix<float>& m, const std::string& source) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (!std::isfinite(m(r, c)))
        throw DataError(source + ": non-finite value at row " + std::to_string(r) + ", column " +
                        std::to_string(c));
}

}  // namespace

// ---------------------------------------------------------------------------
// InteractionSet

InteractionSet::InteractionSet(std::size_t num_users, std::size_t num_items, std::vector<Edge> edges)
    : num_users_(num_users), num_items_(num_items), edges_(std::move(edges)) {
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
    throw DataError("interaction set contains duplicate pairs");
  for (const Edge& e : edges_)
    if (e.user >= num_users_ || e.item >= num_items_)
      throw DataError("edge (" + std::to_string(e.user) + ", " + std::to_string(e.item) +
                      ") out of range for " + std::to_string(num_users_) + " x " +
                      std::to_string(num_items_));
}

bool InteractionSet::contains(Edge e) const { return std::binary_search(edges_.begin(), edges_.end(), e); }

std::vector<std::vector<std::uint32_t>> InteractionSet::items_by_user() const {
  std::vector<std::vector<std::uint32_t>> out(num_users_);
  for (const Edge& e : edges_) out[e.user].push_back(e.item);
  return out;
}

std::vector<std::size_t> InteractionSet::user_degrees() const {
  std::vector<std::size_t> deg(num_users_, 0);
  for (const Edge& e : edges_) ++deg[e.user];
  return deg;
}

std::vector<std::size_t> InteractionSet::item_degrees() const {
  std::vector<std::size_t> deg(num_items_, 0);
  for (const Edge& e : edges_) ++deg[e.item];
  return deg;
}

std::uint64_t InteractionSet::fingerprint() const {
  std::uint64_t h = hash_name("InteractionSet") ^ (num_users_ * 0x9E3779B97F4A7C15ULL) ^ num_items_;
  for (const Edge& e : edges_) {
    h ^= (static_cast<std::uint64_t>(e.user) << 32) | e.item;
    h *= 0x100000001B3ULL;
    h ^= h >> 29;
  }
  return h;
}

InteractionSet set_union(const InteractionSet& a, std::span<const Edge> extra) {
  std::vector<Edge> merged(a.edges().begin(), a.edges().end());
  merged.insert(merged.end(), extra.begin(), extra.end());
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  return InteractionSet(a.num_users(), a.num_items(), std::move(merged));
}

InteractionSet set_difference(const InteractionSet& a, std::span<const Edge> removed) {
  std::vector<Edge> drop(removed.begin(), removed.end());
  std::sort(drop.begin(), drop.end());
  std::vector<Edge> kept;
  kept.reserve(a.size());
  std::set_difference(a.edges().begin(), a.edges().end(), drop.begin(), drop.end(),
                      std::back_inserter(kept));
  return InteractionSet(a.num_users(), a.num_items(), std::move(kept));
}

// ---------------------------------------------------------------------------
// SplitDataset

SplitDataset::SplitDataset(InteractionSet train, InteractionSet val, InteractionSet test)
    : train_(std::move(train)), val_(std::move(val)), test_(std::move(test)) {
  if (val_.num_users() != train_.num_users() || test_.num_users() != train_.num_users() ||
      val_.num_items() != train_.num_items() || test_.num_items() != train_.num_items())
    throw DataError("split parts disagree on user/item counts");
  for (const Edge& e : val_.edges())
    if (train_.contains(e)) throw DataError("validation edge also present in train");
  for (const Edge& e : test_.edges())
    if (train_.contains(e) || val_.contains(e)) throw DataError("test edge overlaps train or validation");
  original_train_ = std::make_shared<const InteractionSet>(train_);
  original_fingerprint_ = original_train_->fingerprint();
}

void SplitDataset::verify_filter_integrity() const {
  if (original_train_->fingerprint() != original_fingerprint_)
    throw std::logic_error("original training positives were modified after the split");
}

// ---------------------------------------------------------------------------
// Ingestion

IngestResult ingest_interactions(const std::filesystem::path& path, std::size_t min_core) {
  auto in = open_input(path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() < 2 || cols[0].empty() || cols[1].empty())
      throw DataError(path.string() + ": malformed line '" + line + "'");
    pairs.emplace_back(std::string(cols[0]), std::string(cols[1]));
  }
  if (pairs.empty()) throw DataError(path.string() + ": no interactions");

  // Provisional ids in first-appearance order; duplicates collapse.
  std::unordered_map<std::string, std::uint32_t> user_of, item_of;
  std::vector<std::string> raw_users, raw_items;
  std::vector<Edge> raw_edges;  // file order, first occurrence only
  for (const auto& [u, i] : pairs) {
    auto [uit, unew] = user_of.try_emplace(u, static_cast<std::uint32_t>(raw_users.size()));
    if (unew) raw_users.push_back(u);
    auto [iit, inew] = item_of.try_emplace(i, static_cast<std::uint32_t>(raw_items.size()));
    if (inew) raw_items.push_back(i);
    raw_edges.push_back(Edge{uit->second, iit->second});
  }
  {
    // Keep the first textual occurrence of each pair.
    std::vector<Edge> sorted = raw_edges;
    std::sort(sorted.begin(), sorted.end());
    std::vector<char> used(sorted.size(), 0);
    std::vector<Edge> kept;
    for (const Edge& e : raw_edges) {
      const auto pos =
          static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), e) - sorted.begin());
      if (used[pos]) continue;
      used[pos] = 1;
      kept.push_back(e);
    }
    raw_edges = std::move(kept);
  }

  std::vector<char> user_alive(raw_users.size(), 1), item_alive(raw_items.size(), 1);
  for (std::size_t pass = 1;; ++pass) {
    std::vector<std::size_t> udeg(raw_users.size(), 0), ideg(raw_items.size(), 0);
    for (const Edge& e : raw_edges)
      if (user_alive[e.user] && item_alive[e.item]) {
        ++udeg[e.user];
        ++ideg[e.item];
      }
    bool changed = false;
    for (std::size_t u = 0; u < raw_users.size(); ++u)
      if (user_alive[u] && udeg[u] < min_core) {
        user_alive[u] = 0;
        changed = true;
      }
    for (std::size_t i = 0; i < raw_items.size(); ++i)
      if (item_alive[i] && ideg[i] < min_core) {
        item_alive[i] = 0;
        changed = true;
      }
    const bool any_left = std::any_of(raw_edges.begin(), raw_edges.end(), [&](const Edge& e) {
      return user_alive[e.user] && item_alive[e.item];
    });
    if (!any_left)
      throw DataError(path.string() + ": " + std::to_string(min_core) + "-core filtering pass " +
                      std::to_string(pass) + " removed every interaction");
    if (!changed) break;
  }

  IngestResult result;
  std::vector<std::uint32_t> user_index(raw_users.size(), UINT32_MAX), item_index(raw_items.size(), UINT32_MAX);
  std::vector<Edge> edges;
  for (const Edge& e : raw_edges) {
    if (!user_alive[e.user] || !item_alive[e.item]) continue;
    if (user_index[e.user] == UINT32_MAX) {
      user_index[e.user] = static_cast<std::uint32_t>(result.user_ids.size());
      result.user_ids.push_back(raw_users[e.user]);
    }
    if (item_index[e.item] == UINT32_MAX) {
      item_index[e.item] = static_cast<std::uint32_t>(result.item_ids.size());
      result.item_ids.push_back(raw_items[e.item]);
    }
    edges.push_back(Edge{user_index[e.user], item_index[e.item]});
  }
  result.interactions = InteractionSet(result.user_ids.size(), result.item_ids.size(), std::move(edges));
  return result;
}

void write_id_maps(const IngestResult& result, const std::string& prefix) {
  auto users = open_output(prefix + ".users.tsv");
  for (std::size_t k = 0; k < result.user_ids.size(); ++k) users << result.user_ids[k] << '\t' << k << '\n';
  auto items = open_output(prefix + ".items.tsv");
  for (std::size_t k = 0; k < result.item_ids.size(); ++k) items << result.item_ids[k] << '\t' << k << '\n';
}

// ---------------------------------------------------------------------------
// Splitting

SplitDataset split_dataset(const InteractionSet& interactions, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be non-negative and sum to 1");
  auto rng = derive_stream("split", seed);
  std::vector<Edge> train, val, test;
  const auto by_user = interactions.items_by_user();
  for (std::uint32_t u = 0; u < by_user.size(); ++u) {
    std::vector<std::uint32_t> items = by_user[u];
    const std::size_t n = items.size();
    if (n < 3) {
      for (auto i : items) train.push_back({u, i});
      continue;
    }
    shuffle(std::span<std::uint32_t>(items), rng);
    const std::size_t n_val = floor_count(ratios.val, n);
    const std::size_t n_test = floor_count(ratios.test, n);
    const std::size_t n_train = n - n_val - n_test;
    for (std::size_t k = 0; k < n; ++k) {
      const Edge e{u, items[k]};
      if (k < n_train)
        train.push_back(e);
      else if (k < n_train + n_val)
        val.push_back(e);
      else
        test.push_back(e);
    }
  }
  const auto M = interactions.num_users(), N = interactions.num_items();
  return SplitDataset(InteractionSet(M, N, std::move(train)), InteractionSet(M, N, std::move(val)),
                      InteractionSet(M, N, std::move(test)));
}

void write_edges(const InteractionSet& edges, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const Edge& e : edges.edges()) out << e.user << '\t' << e.item << '\n';
}

InteractionSet read_edges(const std::filesystem::path& path, std::size_t num_users, std::size_t num_items) {
  auto in = open_input(path);
  std::vector<Edge> edges;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    long long u = -1, i = -1;
    if (!(ss >> u >> i) || u < 0 || i < 0) throw DataError(path.string() + ": malformed edge line '" + line + "'");
    edges.push_back(Edge{static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i)});
  }
  return InteractionSet(num_users, num_items, std::move(edges));
}

void write_split(const SplitDataset& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto meta = open_output(dir / "meta.tsv");
    meta << "users\t" << split.num_users() << "\nitems\t" << split.num_items() << '\n';
  }
  write_edges(split.train(), dir / "train.tsv");
  write_edges(split.val(), dir / "val.tsv");
  write_edges(split.test(), dir / "test.tsv");
}

SplitDataset read_split(const std::filesystem::path& dir) {
  auto meta = open_input(dir / "meta.tsv");
  std::size_t users = 0, items = 0;
  std::string key;
  std::size_t value = 0;
  while (meta >> key >> value) {
    if (key == "users") users = value;
    else if (key == "items") items = value;
  }
  if (users == 0 || items == 0) throw DataError((dir / "meta.tsv").string() + ": missing user/item counts");
  return SplitDataset(read_edges(dir / "train.tsv", users, items), read_edges(dir / "val.tsv", users, items),
                      read_edges(dir / "test.tsv", users, items));
}

// ---------------------------------------------------------------------------
// Feature files

void write_mmf1_block(std::ostream& out, const Matrix<float>& m) {
  out << "MMF1 " << m.rows() << ' ' << m.cols() << '\n';
  std::vector<unsigned char> bytes(m.size() * 4);
  for (std::size_t k = 0; k < m.size(); ++k) {
    const auto bits = std::bit_cast<std::uint32_t>(m.flat()[k]);
    bytes[4 * k + 0] = static_cast<unsigned char>(bits & 0xFF);
    bytes[4 * k + 1] = static_cast<unsigned char>((bits >> 8) & 0xFF);
    bytes[4 * k + 2] = static_cast<unsigned char>((bits >> 16) & 0xFF);
    bytes[4 * k + 3] = static_cast<unsigned char>((bits >> 24) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Matrix<float> read_mmf1_block(std::istream& in, const std::string& source) {
  std::string header;
  if (!std::getline(in, header)) throw DataError(source + ": missing MMF1 header");
  std::istringstream hs(header);
  std::string magic;
  long long rows = -1, cols = -1;
  if (!(hs >> magic >> rows >> cols) || magic != "MMF1" || rows < 0 || cols <= 0)
    throw DataError(source + ": bad MMF1 header '" + header + "'");
  Matrix<float> m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  std::vector<unsigned char> bytes(m.size() * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != bytes.size())
    throw DataError(source + ": shape mismatch, header declares " + std::to_string(rows) + " x " +
                    std::to_string(cols) + " but payload holds " + std::to_string(got / 4 / cols) + " rows");
  for (std::size_t k = 0; k < m.size(); ++k) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * k]) |
                               (static_cast<std::uint32_t>(bytes[4 * k + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[4 * k + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[4 * k + 3]) << 24);
    m.flat()[k] = std::bit_cast<float>(bits);
  }
  return m;
}

FeatureTable load_features(const std::filesystem::path& path, const std::string& modality,
                           std::size_t expected_items) {
  auto in = open_input(path, std::ios::in | std::ios::binary);
  FeatureTable t{modality, read_mmf1_block(in, path.string())};
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError(path.string() + ": trailing bytes after " + std::to_string(t.num_items()) + " rows");
  if (expected_items != 0 && t.num_items() != expected_items)
    throw DataError(path.string() + ": " + std::to_string(t.num_items()) + " rows but dataset has " +
                    std::to_string(expected_items) + " items");
  check_finite(t.rows, path.string());
  return t;
}

void save_features(const FeatureTable& table, const std::filesystem::path& path) {
  check_finite(table.rows, "save_features(" + table.modality + ")");
  auto out = open_output(path, std::ios::out | std::ios::binary);
  write_mmf1_block(out, table.rows);
}

FeatureTable load_features_csv(const std::filesystem::path& path, const std::string& modality,
                               std::size_t expected_items) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header_cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (line.rfind("item_index", 0) != 0 || header_cols < 2)
    throw DataError(path.string() + ": CSV header must start with item_index");
  const std::size_t dim = header_cols - 1;
  std::vector<std::pair<std::size_t, std::vector<float>>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<float> values;
    std::size_t index = 0;
    std::size_t col = 0;
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      const std::string cell = line.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      try {
        if (col == 0)
          index = std::stoull(cell);
        else
          values.push_back(std::stof(cell));
      } catch (const std::exception&) {
        throw DataError(path.string() + ": bad CSV cell '" + cell + "'");
      }
      ++col;
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (values.size() != dim) throw DataError(path.string() + ": row width differs from header");
    rows.emplace_back(index, std::move(values));
  }
  const std::size_t n = rows.size();
  if (expected_items != 0 && n != expected_items)
    throw DataError(path.string() + ": " + std::to_string(n) + " rows but dataset has " +
                    std::to_string(expected_items) + " items");
  FeatureTable t{modality, Matrix<float>(n, dim)};
  std::vector<char> seen(n, 0);
  for (auto& [index, values] : rows) {
    if (index >= n || seen[index]) throw DataError(path.string() + ": item_index values must cover 0..N-1 once");
    seen[index] = 1;
    std::copy(values.begin(), values.end(), t.rows.row(index).begin());
  }
  check_finite(t.rows, path.string());
  return t;
}

void save_features_csv(const FeatureTable& table, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "item_index";
  for (std::size_t c = 0; c < table.dim(); ++c) out << ",f" << c;
  out << '\n' << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (std::size_t r = 0; r < table.num_items(); ++r) {
    out << r;
    for (const float v : table.rows.row(r)) out << ',' << v;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

std::vector<std::vector<std::uint32_t>> synth_sample_positives(const Matrix<double>& user_latent,
                                                               const Matrix<double>& item_latent,
                                                               std::size_t per_user, std::uint64_t seed) {
  auto rng = derive_stream("synth.positives", seed);
  const std::size_t M = user_latent.rows(), N = item_latent.rows();
  per_user = std::min(per_user, N);
  std::vector<std::vector<std::uint32_t>> out(M);
  std::vector<double> weight(N);
  for (std::size_t u = 0; u < M; ++u) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < N; ++i) {
      weight[i] = dot(user_latent.row(u), item_latent.row(i));
      max_logit = std::max(max_logit, weight[i]);
    }
    double total = 0.0;
    for (auto& w : weight) {
      w = std::exp(w - max_logit);
      total += w;
    }
    for (std::size_t draw = 0; draw < per_user; ++draw) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      std::size_t pick = N;
      std::size_t last_positive = N;
      for (std::size_t i = 0; i < N; ++i) {
        if (weight[i] <= 0.0) continue;
        last_positive = i;
        acc += weight[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
      if (pick == N) pick = last_positive;  // rounding at the upper edge
      out[u].push_back(static_cast<std::uint32_t>(pick));
      total -= weight[pick];
      weight[pick] = 0.0;
      if (total <= 0.0) {
        // Remaining mass underflowed; recompute from scratch.
        total = 0.0;
        for (const double w : weight) total += w;
        if (total <= 0.0) break;
      }
    }
  }
  return out;
}

SynthData synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.num_users == 0 || spec.num_items == 0 || spec.latent_dim == 0 || spec.edges_per_user == 0 ||
      spec.modality_dims.empty())
    throw ConfigError("synthetic spec counts must be positive");
  auto latent_rng = derive_stream("synth.latent", seed);
  Matrix<double> users(spec.num_users, spec.latent_dim), items(spec.num_items, spec.latent_dim);
  for (auto& x : users.flat()) x = latent_rng.normal();
  for (auto& x : items.flat()) x = latent_rng.normal();

  const auto positives = synth_sample_positives(users, items, spec.edges_per_user, seed);
  std::vector<Edge> edges;
  for (std::uint32_t u = 0; u < positives.size(); ++u)
    for (const auto i : positives[u]) edges.push_back({u, i});
  const InteractionSet all(spec.num_users, spec.num_items, std::move(edges));

  SynthTruth truth;
  std::vector<FeatureTable> features;
  for (const auto& [name, dim] : spec.modality_dims) {
    if (dim == 0) throw ConfigError("modality '" + name + "' has zero dimension");
    auto rng = derive_stream("synth.features." + name, seed);
    Matrix<double> map(dim, spec.latent_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    for (auto& x : map.flat()) x = rng.normal() * scale;
    FeatureTable table{name, Matrix<float>(spec.num_items, dim)};
    for (std::size_t i = 0; i < spec.num_items; ++i) {
      for (std::size_t c = 0; c < dim; ++c) {
        double v = dot(map.row(c), items.row(i));
        if (spec.feature_noise_std > 0) v += spec.feature_noise_std * rng.normal();
        table.rows(i, c) = static_cast<float>(v);
      }
    }
    std::vector<std::uint32_t> identity(spec.num_items);
    std::iota(identity.begin(), identity.end(), 0u);
    truth.true_feature_rows.push_back(std::move(identity));
    truth.clean_features.push_back(table);
    features.push_back(std::move(table));
  }
  truth.item_latent = std::move(items);
  truth.user_latent = std::move(users);
  return SynthData{split_dataset(all, SplitRatios{}, seed), std::move(features), std::move(truth)};
}

}  // namespace trustrec
