#include "attrgan/service.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "attrgan/embedding.hpp"
#include "attrgan/errors.hpp"
#include "attrgan/generator.hpp"
#include "attrgan/image.hpp"

namespace attrgan {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kSeedMask = (std::uint64_t{1} << 53) - 1;

[[noreturn]] void schema_fail(const std::string& what) { fail(ErrorCode::kSchemaError, what); }

json parse_body(const std::string& body) {
  try {
    json doc = json::parse(body);
    if (!doc.is_object()) fail(ErrorCode::kParseError, "request body must be a JSON object");
    return doc;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParseError, std::string("request body: ") + e.what());
  }
}

void check_version(const json& doc) {
  auto it = doc.find("v");
  if (it == doc.end()) return;
  if (!it->is_number_integer() || it->get<int>() != kApiVersion)
    schema_fail("unsupported request version; this service speaks v" + std::to_string(kApiVersion));
}

std::uint64_t as_seed(const json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    schema_fail(where + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::vector<int> attribute_indices(const json& names, const Vocabulary& vocab, const std::string& where) {
  if (!names.is_array()) schema_fail(where + ": expected an array of attribute names");
  std::vector<int> out;
  for (const auto& a : names) {
    if (!a.is_string()) schema_fail(where + ": expected strings");
    const int idx = vocab.find(a.get<std::string>());
    require(idx >= 0, ErrorCode::kUnknownIndex, where + ": unknown attribute '" + a.get<std::string>() + "'");
    out.push_back(idx);
  }
  std::sort(out.begin(), out.end());
  return out;
}

ordered_json names_of(const std::vector<int>& attrs, const Vocabulary& vocab) {
  ordered_json out = ordered_json::array();
  for (int a : attrs) out.push_back(vocab.name(a));
  return out;
}

ordered_json model_info(const ServedModel& s) {
  return {{"checkpoint_sha256", s.checkpoint_sha256},
          {"config_hash", s.model.config_hash},
          {"iteration", s.model.iteration}};
}

ordered_json response_json(const ServedModel& s, const Generated& g, bool debug) {
  const Vocabularies& vocab = s.model.vocab;
  ordered_json r;
  r["v"] = kApiVersion;
  r["image"] = base64_encode(g.png);
  r["width"] = g.image.dim(3);
  r["height"] = g.image.dim(2);
  r["seeds"] = g.seeds;
  ordered_json attrs = ordered_json::array();
  for (const auto& o : g.layout.objects) attrs.push_back(names_of(o.attributes, vocab.attributes));
  r["attributes"] = std::move(attrs);
  r["model"] = model_info(s);
  if (debug) {
    const int m = g.latents.dim(0), d = g.latents.dim(1);
    ordered_json z = ordered_json::array();
    for (int i = 0; i < m; ++i) {
      auto row = g.latents.data().subspan(static_cast<size_t>(i) * d, static_cast<size_t>(d));
      z.push_back(std::vector<double>(row.begin(), row.end()));
    }
    r["latents"] = std::move(z);
  }
  return r;
}

ShiftSpec parse_shifts(const json& doc, int objects) {
  auto it = doc.find("shifts");
  if (it == doc.end()) schema_fail("missing field 'shifts'");
  if (!it->is_object()) schema_fail("shifts: expected an object");
  ShiftSpec spec;
  auto dx = it->find("dx");
  if (dx == it->end() || !dx->is_array()) schema_fail("shifts.dx: expected an array of numbers");
  for (const auto& v : *dx) {
    if (!v.is_number()) schema_fail("shifts.dx: expected numbers");
    spec.dx.push_back(v.get<double>());
  }
  require(static_cast<int>(spec.dx.size()) == objects, ErrorCode::kLengthMismatch,
          "shifts.dx has " + std::to_string(spec.dx.size()) + " entries for " + std::to_string(objects) +
              " objects");
  if (auto p = it->find("policy"); p != it->end()) {
    if (*p == "clamp")
      spec.policy = ShiftPolicy::kClamp;
    else if (*p == "reject")
      spec.policy = ShiftPolicy::kReject;
    else
      schema_fail("shifts.policy: expected \"clamp\" or \"reject\"");
  }
  return spec;
}

ordered_json vocab_json(const ServedModel& s) {
  const Vocabularies& v = s.model.vocab;
  ordered_json r;
  r["v"] = kApiVersion;
  r["categories"] = v.categories.names();
  r["attributes"] = v.attributes.names();
  // Per category: attributes by descending count, ties by index.
  ordered_json prior = ordered_json::object();
  for (int c = 0; c < v.categories.size(); ++c) {
    std::vector<std::pair<int, std::int64_t>> rows;
    if (auto it = s.model.prior.counts.find(c); it != s.model.prior.counts.end())
      for (const auto& [a, n] : it->second)
        if (n > 0) rows.emplace_back(a, n);
    std::stable_sort(rows.begin(), rows.end(), [](auto& x, auto& y) { return x.second > y.second; });
    ordered_json list = ordered_json::array();
    for (const auto& [a, n] : rows) list.push_back({{"attribute", v.attributes.name(a)}, {"count", n}});
    prior[v.categories.name(c)] = std::move(list);
  }
  r["prior"] = std::move(prior);
  ordered_json totals = ordered_json::array();
  for (const auto& [a, n] : s.model.prior.attribute_totals())
    totals.push_back({{"attribute", v.attributes.name(a)}, {"count", n}});
  r["attribute_totals"] = std::move(totals);
  return r;
}

ordered_json error_json(std::string_view code, const std::string& message) {
  ordered_json r;
  r["v"] = kApiVersion;
  r["error"] = {{"code", std::string(code)}, {"message", message}};
  return r;
}

}  // namespace

std::string sha256_hex(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open " + file.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) == 1,
          ErrorCode::kIoError, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::shared_ptr<const ServedModel> load_served_model(const std::filesystem::path& checkpoint,
                                                     const std::optional<std::filesystem::path>& classifier) {
  auto s = std::make_shared<ServedModel>();
  s->model = load_model(checkpoint);
  s->checkpoint_sha256 = sha256_hex(checkpoint);
  if (classifier) {
    LoadedClassifier c = load_classifier(*classifier);
    require(c.vocab.categories == s->model.vocab.categories && c.vocab.attributes == s->model.vocab.attributes,
            ErrorCode::kSchemaError, "classifier vocabulary differs from the checkpoint's");
    s->features = std::make_shared<AttributeClassifier>(std::move(c.classifier));
    s->feature_source = "classifier";
  } else {
    s->features = std::make_shared<PixelFeatures>(s->model.config.model.object_size);
    s->feature_source = "pixels";
  }
  return s;
}

GenerateRequest parse_generate_request(const std::string& body, const Vocabularies& vocab) {
  const json doc = parse_body(body);
  check_version(doc);
  GenerateRequest req;
  auto layout = doc.find("layout");
  if (layout == doc.end()) schema_fail("missing field 'layout'");
  if (!layout->is_object()) schema_fail("layout: expected an object");
  req.layout = parse_layout(layout->dump(), vocab);
  const int m = req.layout.size();

  req.attributes_given.assign(static_cast<size_t>(m), false);
  if (auto objs = layout->find("objects"); objs != layout->end())
    for (int i = 0; i < m; ++i) req.attributes_given[static_cast<size_t>(i)] = (*objs)[i].contains("attributes");

  if (auto it = doc.find("attributes"); it != doc.end() && !it->is_null()) {
    if (!it->is_array()) schema_fail("attributes: expected an array with one entry per object");
    require(static_cast<int>(it->size()) == m, ErrorCode::kLengthMismatch,
            "attributes has " + std::to_string(it->size()) + " entries for " + std::to_string(m) + " objects");
    for (int i = 0; i < m; ++i) {
      const json& o = (*it)[i];
      if (o.is_null()) continue;
      req.layout.objects[static_cast<size_t>(i)].attributes =
          attribute_indices(o, vocab.attributes, "attributes[" + std::to_string(i) + "]");
      req.attributes_given[static_cast<size_t>(i)] = true;
    }
    validate_layout(req.layout, vocab.categories.size(), vocab.attributes.size());
  }

  if (auto it = doc.find("seeds"); it != doc.end() && !it->is_null()) {
    if (!it->is_array()) schema_fail("seeds: expected an array with one entry per object");
    require(static_cast<int>(it->size()) == m, ErrorCode::kLengthMismatch,
            "seeds has " + std::to_string(it->size()) + " entries for " + std::to_string(m) + " objects");
    for (int i = 0; i < m; ++i) {
      const json& s = (*it)[i];
      req.seeds.push_back(s.is_null() ? std::nullopt
                                      : std::optional(as_seed(s, "seeds[" + std::to_string(i) + "]")));
    }
  }
  if (auto it = doc.find("seed"); it != doc.end()) req.seed = as_seed(*it, "seed");
  if (auto it = doc.find("sample_count"); it != doc.end()) {
    if (!it->is_number_integer()) schema_fail("sample_count: expected an integer");
    req.sample_count = it->get<int>();
    require(req.sample_count >= 0 && req.sample_count <= kMaxAttributes, ErrorCode::kTooManyAttributes,
            "sample_count must lie in [0, " + std::to_string(kMaxAttributes) + "]");
  }
  if (auto it = doc.find("debug"); it != doc.end()) {
    if (!it->is_boolean()) schema_fail("debug: expected a boolean");
    req.debug = it->get<bool>();
  }
  return req;
}

Generated run_generate(const ServedModel& served, const GenerateRequest& request) {
  const int m = request.layout.size();
  std::vector<std::uint64_t> seeds(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    const bool given = !request.seeds.empty() && request.seeds[static_cast<size_t>(i)].has_value();
    seeds[static_cast<size_t>(i)] = given ? *request.seeds[static_cast<size_t>(i)]
                                          : (mix_seed(request.seed, static_cast<std::uint64_t>(i)) & kSeedMask);
  }
  Layout resolved = request.layout;
  for (int i = 0; i < m; ++i) {
    if (request.attributes_given[static_cast<size_t>(i)]) continue;
    auto& obj = resolved.objects[static_cast<size_t>(i)];
    Rng rng(mix_seed(seeds[static_cast<size_t>(i)], 1));
    obj.attributes = sample_attributes(served.model.prior, obj.category, request.sample_count, rng);
  }
  return run_generate(served, resolved, seeds);
}

Generated run_generate(const ServedModel& served, const Layout& resolved, std::span<const std::uint64_t> seeds) {
  const Generator& gen = served.model.models.generator;
  const int m = resolved.size(), d = gen.config().latent_dim;
  require(static_cast<int>(seeds.size()) == m, ErrorCode::kLengthMismatch, "one seed per object required");
  validate_layout(resolved, served.model.vocab.categories.size(), served.model.vocab.attributes.size());
  nn::NoGradGuard no_grad;
  std::vector<double> z;
  z.reserve(static_cast<size_t>(m) * d);
  for (std::uint64_t s : seeds) {
    Rng rng(s);
    const auto row = sample_latent_prior(1, d, rng).values();
    z.insert(z.end(), row.begin(), row.end());
  }
  Generated g;
  g.layout = resolved;
  g.seeds.assign(seeds.begin(), seeds.end());
  g.latents = Tensor::from({m, d}, std::move(z));
  g.image = gen.generate(resolved, g.latents);
  g.png = encode_png(to_rgb8(g.image, 0));
  return g;
}

// ---- Service ----

struct Service::Http {
  httplib::Server server;
  std::thread thread;
};

Service::Service() = default;
Service::Service(std::shared_ptr<const ServedModel> model) : model_(std::move(model)) {}
Service::~Service() { stop(); }

void Service::swap_model(std::shared_ptr<const ServedModel> model) {
  std::unique_lock lock(mutex_);
  model_ = std::move(model);
}

bool Service::loaded() const {
  std::shared_lock lock(mutex_);
  return model_ != nullptr;
}

Service::Response Service::handle(const std::string& method, const std::string& path,
                                  const std::string& body) const {
  std::shared_lock lock(mutex_);
  const ServedModel* s = model_.get();
  try {
    if (path == "/healthz") {
      if (method != "GET") return {405, error_json("MethodNotAllowed", "use GET").dump()};
      ordered_json r{{"v", kApiVersion}, {"status", "ok"}, {"model_loaded", s != nullptr}};
      return {200, r.dump()};
    }
    const bool get = path == "/model" || path == "/vocab";
    const bool post = path == "/generate" || path == "/generate/pair";
    if (!get && !post) return {404, error_json("NotFound", "no route " + path).dump()};
    if ((get && method != "GET") || (post && method != "POST"))
      return {405, error_json("MethodNotAllowed", std::string("use ") + (get ? "GET" : "POST")).dump()};
    require(s != nullptr, ErrorCode::kModelNotLoaded, "no model checkpoint is loaded");

    if (path == "/model") {
      ordered_json r;
      r["v"] = kApiVersion;
      r.update(model_info(*s));
      r["preset"] = s->model.config.preset;
      r["features"] = s->feature_source;
      r["config"] = ordered_json::parse(training_config_json(s->model.config));
      return {200, r.dump()};
    }
    if (path == "/vocab") return {200, vocab_json(*s).dump()};

    const GenerateRequest req = parse_generate_request(body, s->model.vocab);
    if (path == "/generate") return {200, response_json(*s, run_generate(*s, req), req.debug).dump()};

    const ShiftSpec shifts = parse_shifts(json::parse(body), req.layout.size());
    const Generated a = run_generate(*s, req);
    const Layout shifted = shift_layout(a.layout, shifts);
    const Generated b = run_generate(*s, shifted, a.seeds);
    const Consistency c = consistency_score(a.image, b.image, a.layout, shifted, *s->features);
    ordered_json r;
    r["v"] = kApiVersion;
    r["original"] = response_json(*s, a, req.debug);
    r["shifted"] = response_json(*s, b, req.debug);
    r["shifted_layout"] = ordered_json::parse(serialize_layout(shifted, s->model.vocab));
    r["consistency"] = {{"bg", c.bg}, {"fg", c.fg}, {"has_background", c.has_background}};
    return {200, r.dump()};
  } catch (const Error& e) {
    const int status = e.code() == ErrorCode::kModelNotLoaded ? 503 : 400;
    return {status, error_json(error_code_name(e.code()), e.what()).dump()};
  } catch (const std::exception& e) {
    return {500, error_json("Internal", e.what()).dump()};
  }
}

void Service::ensure_http(int threads) {
  if (http_) return;
  http_ = std::make_unique<Http>();
  auto& srv = http_->server;
  srv.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<size_t>(std::max(1, threads))); };
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    Response r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  for (const char* p : {"/healthz", "/model", "/vocab", "/generate", "/generate/pair"}) {
    srv.Get(p, route);
    srv.Post(p, route);
  }
}

void Service::listen(const std::string& host, int port, int threads) {
  ensure_http(threads);
  if (port == 0) {
    port_ = http_->server.bind_to_any_port(host);
  } else {
    require(http_->server.bind_to_port(host, port), ErrorCode::kIoError,
            "cannot bind " + host + ":" + std::to_string(port));
    port_ = port;
  }
  require(port_ > 0, ErrorCode::kIoError, "cannot bind " + host);
  http_->server.listen_after_bind();
}

int Service::start(const std::string& host, int port, int threads) {
  ensure_http(threads);
  if (port == 0) {
    port_ = http_->server.bind_to_any_port(host);
  } else {
    port_ = http_->server.bind_to_port(host, port) ? port : -1;
  }
  require(port_ > 0, ErrorCode::kIoError, "cannot bind " + host + ":" + std::to_string(port));
  http_->thread = std::thread([this] { http_->server.listen_after_bind(); });
  http_->server.wait_until_ready();
  return port_;
}

void Service::stop() {
  if (!http_) return;
  http_->server.stop();
  if (http_->thread.joinable()) http_->thread.join();
}

}  // namespace attrgan
