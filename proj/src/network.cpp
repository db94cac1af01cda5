#include "jigsawhsi/network.hpp"

#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "jigsawhsi/error.hpp"

namespace jigsawhsi {

namespace {

constexpr std::string_view kModule = "jigsaw-graph";

std::string optional_to_string(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "none"; }

std::optional<std::size_t> optional_from_string(const std::string& text) {
  if (lowercase(text) == "none") return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ValidationError(kModule, fmt::format("expected a count or 'none', got '{}'", text));
  }
}

std::vector<std::size_t> list_from_string(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    auto v = optional_from_string(item);
    if (!v) throw ValidationError(kModule, "list entries must be counts");
    out.push_back(*v);
  }
  return out;
}

}  // namespace

void NetworkSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError(kModule, msg); };
  if (window == 0 || window % 2 == 0) fail(fmt::format("window size must be odd, got {}", window));
  if (channels == 0) fail("input channels must be positive");
  if (hsi_filters && *hsi_filters == 0) fail("hsi_filters must be positive when present");
  for (auto f : module_a)
    if (f == 0) fail("module A filter counts must be positive");
  if (max_filter_size == 0 || max_filter_size % 2 == 0) {
    fail(fmt::format("max filter size must be odd, got {}", max_filter_size));
  }
  if (max_filter_size > window) {
    fail(fmt::format("max filter size {} is wider than the {}x{} tile", max_filter_size, window, window));
  }
  if (branch_units == 0) fail("branch_units must be positive");
  if (nin_before && *nin_before == 0) fail("nin_before must be positive when present");
  if (nin_after && *nin_after == 0) fail("nin_after must be positive when present");
  if (max_pool_size == 0) fail("max_pool_size must be positive");
  if (avg_pool_size == 0 || avg_pool_size > window) fail("avg_pool_size must be in [1, window]");
  if (dense_units[0] == 0 || dense_units[1] == 0) fail("dense_units must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout must be in [0, 1)");
  if (num_classes < 2) fail(fmt::format("need at least 2 classes, got {}", num_classes));
}

std::vector<std::size_t> NetworkSpec::branch_kernels() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k <= max_filter_size; k += 2) out.push_back(k);
  return out;
}

std::size_t NetworkSpec::trunk_channels() const {
  if (!module_a.empty()) return module_a.back();
  if (hsi_filters) return *hsi_filters;
  return channels;
}

void spec_to_header(const NetworkSpec& s, RasterHeader& h) {
  h.set("net.window", static_cast<std::uint64_t>(s.window));
  h.set("net.channels", static_cast<std::uint64_t>(s.channels));
  h.set("net.hsi_filters", optional_to_string(s.hsi_filters));
  h.set("net.module_a", fmt::format("{}", fmt::join(s.module_a, ",")));
  h.set("net.max_filter_size", static_cast<std::uint64_t>(s.max_filter_size));
  h.set("net.branch_units", static_cast<std::uint64_t>(s.branch_units));
  h.set("net.nin_before", optional_to_string(s.nin_before));
  h.set("net.nin_after", optional_to_string(s.nin_after));
  h.set("net.max_pool_size", static_cast<std::uint64_t>(s.max_pool_size));
  h.set("net.avg_pool_size", static_cast<std::uint64_t>(s.avg_pool_size));
  h.set("net.crop", s.crop_enabled ? "true" : "false");
  h.set("net.dense_units", fmt::format("{},{}", s.dense_units[0], s.dense_units[1]));
  h.set_double("net.dropout", s.dropout_rate);
  h.set("net.num_classes", static_cast<std::uint64_t>(s.num_classes));
}

NetworkSpec spec_from_header(const RasterHeader& h) {
  NetworkSpec s;
  s.window = h.get_uint("net.window", kModule);
  s.channels = h.get_uint("net.channels", kModule);
  s.hsi_filters = optional_from_string(h.get("net.hsi_filters", kModule));
  s.module_a = list_from_string(h.get("net.module_a", kModule));
  s.max_filter_size = h.get_uint("net.max_filter_size", kModule);
  s.branch_units = h.get_uint("net.branch_units", kModule);
  s.nin_before = optional_from_string(h.get("net.nin_before", kModule));
  s.nin_after = optional_from_string(h.get("net.nin_after", kModule));
  s.max_pool_size = h.get_uint("net.max_pool_size", kModule);
  s.avg_pool_size = h.get_uint("net.avg_pool_size", kModule);
  const std::string crop = lowercase(h.get("net.crop", kModule));
  if (crop != "true" && crop != "false") throw ValidationError(kModule, "net.crop must be true or false");
  s.crop_enabled = crop == "true";
  const auto dense = list_from_string(h.get("net.dense_units", kModule));
  if (dense.size() != 2) throw ValidationError(kModule, "net.dense_units needs two values");
  s.dense_units = {dense[0], dense[1]};
  s.dropout_rate = h.get_double("net.dropout", kModule);
  s.num_classes = h.get_uint("net.num_classes", kModule);
  s.validate();
  return s;
}

template <class T>
Model<T>::Model(const NetworkSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  std::size_t channels = spec_.channels;
  if (spec_.hsi_filters) {
    trunk_.emplace_back("hsi_conv", 1, channels, *spec_.hsi_filters);
    channels = *spec_.hsi_filters;
  }
  for (std::size_t i = 0; i < spec_.module_a.size(); ++i) {
    trunk_.emplace_back(fmt::format("module_a.{}", i), 1, channels, spec_.module_a[i]);
    channels = spec_.module_a[i];
  }
  const std::size_t trunk_channels = channels;

  std::size_t pyramid_channels = 0;
  for (std::size_t k : spec_.branch_kernels()) {
    Branch branch;
    const std::string name = fmt::format("branch_k{}", k);
    std::size_t in = trunk_channels;
    if (spec_.nin_before) {
      branch.convs.emplace_back(name + ".reduce", 1, in, *spec_.nin_before);
      in = *spec_.nin_before;
    }
    branch.convs.emplace_back(name + ".conv", k, in, spec_.branch_units);
    in = spec_.branch_units;
    if (spec_.nin_after) {
      branch.convs.emplace_back(name + ".project", 1, in, *spec_.nin_after);
      in = *spec_.nin_after;
    }
    pyramid_channels += in;
    branches_.push_back(std::move(branch));
  }
  {
    Branch pool;
    pool.pool = spec_.max_pool_size;
    std::size_t out = trunk_channels;
    if (spec_.nin_after) {
      pool.convs.emplace_back("branch_pool.project", 1, trunk_channels, *spec_.nin_after);
      out = *spec_.nin_after;
    }
    pyramid_channels += out;
    branches_.push_back(std::move(pool));
  }

  const std::size_t pooled = (spec_.window + spec_.avg_pool_size - 1) / spec_.avg_pool_size;
  const std::size_t features = pooled * pooled * pyramid_channels + (spec_.crop_enabled ? trunk_channels : 0);
  dense1_ = nn::Dense<T>("dense1", features, spec_.dense_units[0]);
  dense2_ = nn::Dense<T>("dense2", spec_.dense_units[0], spec_.dense_units[1]);
  head_ = nn::Dense<T>("head", spec_.dense_units[1], spec_.num_classes);

  Rng rng(seed);
  for (auto& conv : trunk_) conv.init(rng);
  for (auto& branch : branches_)
    for (auto& conv : branch.convs) conv.init(rng);
  dense1_.init(rng);
  dense2_.init(rng);
  head_.init(rng);

  cache_.drop1 = nn::Dropout<T>(spec_.dropout_rate);
  cache_.drop2 = nn::Dropout<T>(spec_.dropout_rate);
}

template <class T>
void Model<T>::check_batch(const Tensor& batch) const {
  const nn::Shape4 s = batch.shape();
  if (s.n == 0 || s.h != spec_.window || s.w != spec_.window || s.c != spec_.channels) {
    throw ValidationError(kModule, fmt::format("batch shape {} does not match the network input (N, {}, {}, {})",
                                               nn::to_string(s), spec_.window, spec_.window, spec_.channels));
  }
}

template <class T>
typename Model<T>::Tensor Model<T>::run_trunk(const Tensor& batch, Cache* cache) const {
  Tensor h = batch;
  for (const auto& conv : trunk_) {
    h = nn::relu(conv.forward(h));
    if (cache) cache->trunk.push_back(h);
  }
  return h;
}

template <class T>
typename Model<T>::Tensor Model<T>::run_pyramid(const Tensor& trunk, Cache* cache) const {
  std::vector<Tensor> outputs;
  outputs.reserve(branches_.size());
  for (const auto& branch : branches_) {
    BranchCache bc;
    Tensor h = branch.pool ? nn::max_pool(trunk, branch.pool) : trunk;
    if (cache && branch.pool) bc.pooled = h;
    for (const auto& conv : branch.convs) {
      h = nn::relu(conv.forward(h));
      if (cache) bc.outputs.push_back(h);
    }
    if (cache) cache->branches.push_back(std::move(bc));
    outputs.push_back(std::move(h));
  }
  std::vector<const Tensor*> parts;
  for (const auto& o : outputs) parts.push_back(&o);
  return nn::concat_channels<T>(parts);
}

template <class T>
typename Model<T>::Tensor Model<T>::run(const Tensor& batch, nn::Mode mode, Rng* rng, Cache* cache) const {
  check_batch(batch);
  if (cache) {
    cache->input = batch;
    cache->trunk.clear();
    cache->branches.clear();
  }
  const Tensor trunk = run_trunk(batch, cache);
  const Tensor pyramid = run_pyramid(trunk, cache);
  const Tensor pooled = nn::avg_pool(pyramid, spec_.avg_pool_size);
  Tensor left = nn::flatten(pooled);
  Tensor features;
  if (spec_.crop_enabled) {
    const Tensor right = nn::crop_center(trunk);
    const Tensor* parts[] = {&left, &right};
    features = nn::concat_channels<T>(parts);
  } else {
    features = std::move(left);
  }

  Tensor hidden1 = nn::relu(dense1_.forward(features));
  Tensor dropped1, hidden2, dropped2;
  if (mode == nn::Mode::Train) {
    dropped1 = cache->drop1.forward(hidden1, mode, *rng);
    hidden2 = nn::relu(dense2_.forward(dropped1));
    dropped2 = cache->drop2.forward(hidden2, mode, *rng);
  } else {
    dropped1 = hidden1;
    hidden2 = nn::relu(dense2_.forward(dropped1));
    dropped2 = hidden2;
  }
  Tensor logits = head_.forward(dropped2);
  if (cache) {
    cache->pyramid_shape = pyramid.shape();
    cache->pooled_shape = pooled.shape();
    cache->left_features = pooled.shape().per_item();
    cache->features = std::move(features);
    cache->hidden1 = std::move(hidden1);
    cache->dropped1 = std::move(dropped1);
    cache->hidden2 = std::move(hidden2);
    cache->dropped2 = std::move(dropped2);
    cache->logits = logits;
    cache->valid = true;
  }
  return logits;
}

template <class T>
typename Model<T>::Tensor Model<T>::forward(const Tensor& batch, nn::Mode mode, Rng& rng) {
  if (mode == nn::Mode::Infer) {
    cache_.valid = false;
    return nn::softmax(run(batch, mode, &rng, nullptr));
  }
  return nn::softmax(run(batch, mode, &rng, &cache_));
}

template <class T>
typename Model<T>::Tensor Model<T>::predict(const Tensor& batch) const {
  return nn::softmax(run(batch, nn::Mode::Infer, nullptr, nullptr));
}

template <class T>
typename Model<T>::Tensor Model<T>::pyramid(const Tensor& batch) const {
  check_batch(batch);
  return run_pyramid(run_trunk(batch, nullptr), nullptr);
}

template <class T>
typename Model<T>::Loss Model<T>::objective(const Tensor& batch, const Tensor& targets, nn::Mode mode, Rng& rng,
                                            double l2_coeff) const {
  Cache scratch;
  scratch.drop1 = nn::Dropout<T>(spec_.dropout_rate);
  scratch.drop2 = nn::Dropout<T>(spec_.dropout_rate);
  const Tensor logits = run(batch, mode, &rng, mode == nn::Mode::Train ? &scratch : nullptr);
  Loss loss;
  loss.cross_entropy = nn::softmax_xent(logits, targets).loss;
  const auto params = parameters();
  loss.penalty = nn::l2_value<T>(params, l2_coeff);
  return loss;
}

template <class T>
typename Model<T>::Loss Model<T>::backward(const Tensor& targets, double l2_coeff) {
  if (!cache_.valid) throw ValidationError(kModule, "backward() needs a preceding train-mode forward()");
  zero_grad();
  Cache& c = cache_;
  const auto xent = nn::softmax_xent(c.logits, targets);

  Tensor g = head_.backward(c.dropped2, xent.dlogits);
  g = c.drop2.backward(g);
  g = nn::relu_backward(c.hidden2, g);
  g = dense2_.backward(c.dropped1, g);
  g = c.drop1.backward(g);
  g = nn::relu_backward(c.hidden1, g);
  g = dense1_.backward(c.features, g);

  const std::size_t trunk_channels = spec_.trunk_channels();
  Tensor d_left, d_right;
  if (spec_.crop_enabled) {
    const std::size_t sizes[] = {c.left_features, trunk_channels};
    auto parts = nn::split_channels<T>(g, sizes);
    d_left = std::move(parts[0]);
    d_right = std::move(parts[1]);
  } else {
    d_left = std::move(g);
  }
  const Tensor d_pyramid = nn::avg_pool_backward(std::move(d_left).reshaped(c.pooled_shape), c.pyramid_shape,
                                                 spec_.avg_pool_size);

  std::vector<std::size_t> branch_channels;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const auto& outs = c.branches[i].outputs;
    branch_channels.push_back(outs.empty() ? trunk_channels : outs.back().shape().c);
  }
  const auto d_branches = nn::split_channels<T>(d_pyramid, branch_channels);

  const Tensor& trunk_out = c.trunk.empty() ? c.input : c.trunk.back();
  Tensor d_trunk(trunk_out.shape());
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    Branch& branch = branches_[i];
    const BranchCache& bc = c.branches[i];
    Tensor gb = d_branches[i];
    for (std::size_t j = branch.convs.size(); j-- > 0;) {
      gb = nn::relu_backward(bc.outputs[j], gb);
      const Tensor& in = j > 0 ? bc.outputs[j - 1] : (branch.pool ? bc.pooled : trunk_out);
      gb = branch.convs[j].backward(in, gb);
    }
    if (branch.pool) gb = nn::max_pool_backward(trunk_out, gb, branch.pool);
    for (std::size_t e = 0; e < d_trunk.size(); ++e) d_trunk.data()[e] += gb.data()[e];
  }
  if (spec_.crop_enabled) {
    const Tensor gc = nn::crop_center_backward(d_right, trunk_out.shape());
    for (std::size_t e = 0; e < d_trunk.size(); ++e) d_trunk.data()[e] += gc.data()[e];
  }

  Tensor gt = std::move(d_trunk);
  for (std::size_t j = trunk_.size(); j-- > 0;) {
    gt = nn::relu_backward(c.trunk[j], gt);
    const Tensor& in = j > 0 ? c.trunk[j - 1] : c.input;
    gt = trunk_[j].backward(in, gt);
  }

  auto params = parameters();
  Loss loss;
  loss.cross_entropy = xent.loss;
  loss.penalty = nn::l2_penalty<T>(params, l2_coeff);
  return loss;
}

template <class T>
std::vector<nn::Param<T>*> Model<T>::parameters() {
  std::vector<nn::Param<T>*> out;
  auto add_conv = [&](nn::Conv2D<T>& conv) {
    out.push_back(&conv.weight);
    out.push_back(&conv.bias);
  };
  for (auto& conv : trunk_) add_conv(conv);
  for (auto& branch : branches_)
    for (auto& conv : branch.convs) add_conv(conv);
  for (auto* dense : {&dense1_, &dense2_, &head_}) {
    out.push_back(&dense->weight);
    out.push_back(&dense->bias);
  }
  return out;
}

template <class T>
std::vector<const nn::Param<T>*> Model<T>::parameters() const {
  auto mutable_params = const_cast<Model*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <class T>
std::size_t Model<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto* p : parameters()) total += p->size();
  return total;
}

template <class T>
void Model<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template class Model<float>;
template class Model<double>;

void save_checkpoint(const Model<float>& model, const std::filesystem::path& header_path) {
  RasterHeader header;
  header.set("kind", "jigsawhsi-model");
  spec_to_header(model.spec(), header);
  header.set("dtype", "float32");
  header.set("byteorder", "le");
  header.set("parameter_count", static_cast<std::uint64_t>(model.parameter_count()));
  std::string names;
  for (const auto* p : model.parameters()) {
    if (!names.empty()) names += ',';
    names += p->name;
  }
  header.set("arrays", names);
  header.set("data_file", default_payload_path(header_path).filename().string());

  std::vector<float> payload;
  payload.reserve(model.parameter_count());
  for (const auto* p : model.parameters()) payload.insert(payload.end(), p->value.begin(), p->value.end());
  if (!header_path.parent_path().empty()) std::filesystem::create_directories(header_path.parent_path());
  write_header(header, header_path, kModule);
  write_payload<float>(default_payload_path(header_path), payload, kModule);
}

Model<float> load_checkpoint(const std::filesystem::path& header_path) {
  const RasterHeader header = read_header(header_path, kModule);
  header.expect("kind", "jigsawhsi-model", kModule);
  header.expect("dtype", "float32", kModule);
  header.expect("byteorder", "le", kModule);
  Model<float> model(spec_from_header(header), 0);
  const std::size_t count = header.get_uint("parameter_count", kModule);
  if (count != model.parameter_count()) {
    throw ValidationError(kModule, fmt::format("checkpoint holds {} parameters but its spec implies {}", count,
                                               model.parameter_count()));
  }
  const std::vector<float> payload = read_payload<float>(payload_path(header, header_path), count, kModule);
  std::size_t offset = 0;
  for (auto* p : model.parameters()) {
    std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(offset), p->size(), p->value.begin());
    offset += p->size();
  }
  return model;
}

}  // namespace jigsawhsi
