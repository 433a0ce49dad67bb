#include "khid/embed.hpp"

#include <cmath>
#include <set>

#include "khid/error.hpp"
#include "khid/text.hpp"

// After Eigen: the resolver header pulled in here defines a `_res` macro.
#include <httplib.h>

namespace khid::embed {
namespace {

VectorXd to_vector(const io::json& arr, std::size_t expected_dim, const std::string& id) {
  if (!arr.is_array() || arr.size() != expected_dim) {
    throw FormatError("embed service: vector for id " + id + " has dimension " +
                      std::to_string(arr.is_array() ? arr.size() : 0) + ", expected " +
                      std::to_string(expected_dim));
  }
  VectorXd v(static_cast<Eigen::Index>(expected_dim));
  for (std::size_t i = 0; i < expected_dim; ++i) {
    if (!arr[i].is_number()) throw FormatError("embed service: non-numeric entry for id " + id);
    const double x = arr[i].get<double>();
    if (!std::isfinite(x)) throw FormatError("embed service: non-finite entry for id " + id);
    v(static_cast<Eigen::Index>(i)) = x;
  }
  return v;
}

// Response items must map one-to-one onto the request ids.
std::map<std::string, const io::json*> index_items(const io::json& request, const io::json& response) {
  if (!response.is_object() || response.value("v", 0) != io::kSchemaVersion || !response.contains("items") ||
      !response["items"].is_array()) {
    throw FormatError("embed service: malformed response envelope");
  }
  std::set<std::string> wanted;
  for (const auto& item : request["items"]) wanted.insert(item["id"].get<std::string>());
  std::map<std::string, const io::json*> by_id;
  for (const auto& item : response["items"]) {
    if (!item.contains("id") || !item["id"].is_string()) throw FormatError("embed service: item without id");
    auto id = item["id"].get<std::string>();
    if (!wanted.contains(id)) throw FormatError("embed service: unexpected id " + id);
    if (!by_id.emplace(id, &item).second) throw FormatError("embed service: duplicate id " + id);
  }
  if (by_id.size() != wanted.size()) throw FormatError("embed service: response is missing ids");
  return by_id;
}

}  // namespace

RemoteProvider::RemoteProvider(RemoteOptions options) : options_(std::move(options)) {
  if (options_.max_batch == 0) throw ContractError("max_batch must be positive");
}

std::vector<std::string> RemoteProvider::tokenize(std::string_view text) const { return text::split_whitespace(text); }

io::json RemoteProvider::make_request(const std::vector<std::pair<std::string, std::string>>& items,
                                      const std::string& model, bool pooled) {
  io::json req{{"v", io::kSchemaVersion}, {"model", model}, {"options", {{"pooled", pooled}}}};
  req["items"] = io::json::array();
  for (const auto& [id, text] : items) req["items"].push_back({{"id", id}, {"text", text}});
  return req;
}

io::json RemoteProvider::post_embed(const io::json& request) const {
  httplib::Client cli(options_.base_url);
  const auto secs = static_cast<time_t>(options_.timeout_seconds);
  cli.set_connection_timeout(secs, 0);
  cli.set_read_timeout(secs, 0);
  auto res = cli.Post("/embed", request.dump(), "application/json");
  if (!res) throw Error("embed service unreachable at " + options_.base_url + ": " + httplib::to_string(res.error()));
  if (res->status == 404) throw LookupError("embed service: unknown model " + options_.model);
  io::json body = io::json::parse(res->body, nullptr, false);
  if (res->status != 200) {
    const std::string detail =
        body.is_object() && body.contains("error") ? body["error"].dump() : res->body.substr(0, 200);
    throw Error("embed service: HTTP " + std::to_string(res->status) + ": " + detail);
  }
  if (body.is_discarded()) throw FormatError("embed service: response is not JSON");
  return body;
}

Mat RemoteProvider::encode_tokens(const std::vector<std::string>& tokens) const {
  auto req = make_request({{"0", text::join(tokens)}}, options_.model, false);
  auto res = post_embed(req);
  const auto& item = *index_items(req, res).at("0");
  if (!item.contains("token_vectors") || !item["token_vectors"].is_array()) {
    throw FormatError("embed service: missing token_vectors");
  }
  const auto& rows = item["token_vectors"];
  Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kDimension));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = to_vector(rows[i], kDimension, "0").transpose();
  }
  return out;
}

VectorXd RemoteProvider::segment_vector(const std::vector<std::string>& framed_segment) const {
  // The service frames its own input; drop ours and take its first state.
  std::vector<std::string> content;
  for (const auto& t : framed_segment) {
    if (t != sequence::kClsToken) content.push_back(t);
  }
  Mat states = encode_tokens(content);
  if (states.rows() == 0) throw FormatError("embed service: no token states returned");
  return states.row(0).transpose();
}

std::map<std::string, PooledResult> RemoteProvider::encode_pooled(
    const std::vector<std::pair<std::string, std::string>>& items) const {
  std::set<std::string> seen;
  for (const auto& [id, _] : items) {
    if (!seen.insert(id).second) throw ContractError("encode_pooled: duplicate id " + id);
  }
  std::map<std::string, PooledResult> out;
  for (std::size_t start = 0; start < items.size(); start += options_.max_batch) {
    const auto end = std::min(items.size(), start + options_.max_batch);
    std::vector<std::pair<std::string, std::string>> batch(items.begin() + static_cast<long>(start),
                                                           items.begin() + static_cast<long>(end));
    auto req = make_request(batch, options_.model, true);
    auto res = post_embed(req);
    for (const auto& [id, item] : index_items(req, res)) {
      if (!item->contains("vector")) throw FormatError("embed service: missing vector for id " + id);
      out[id] = {to_vector((*item)["vector"], kDimension, id), item->value("truncated", false)};
    }
  }
  return out;
}

HealthInfo RemoteProvider::health() const {
  httplib::Client cli(options_.base_url);
  const auto secs = static_cast<time_t>(options_.timeout_seconds);
  cli.set_connection_timeout(secs, 0);
  cli.set_read_timeout(secs, 0);
  auto res = cli.Get("/health");
  if (!res) throw Error("embed service unreachable at " + options_.base_url);
  if (res->status != 200) throw Error("embed service health: HTTP " + std::to_string(res->status));
  HealthInfo info;
  try {
    auto body = io::json::parse(res->body);
    info = {body.at("model").get<std::string>(), body.at("dimension").get<std::size_t>(),
            body.at("max_sequence_length").get<std::size_t>()};
  } catch (const io::json::exception& e) {
    throw FormatError(std::string("embed service health: ") + e.what());
  }
  if (info.dimension != kDimension) {
    throw FormatError("embed service reports dimension " + std::to_string(info.dimension) + ", expected 768");
  }
  return info;
}

}  // namespace khid::embed
