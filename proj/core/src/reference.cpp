#include "apfit/reference.hpp"

#include <filesystem>
#include <stdexcept>

#include "apfit/error.hpp"
#include "apfit/scene_io.hpp"
#include "json.hpp"

namespace apfit {

namespace fs = std::filesystem;
using json   = nlohmann::json;

View ReferenceProvider::view(std::size_t) const {
  throw std::logic_error("reference provider has no fixed views");
}

InternalReference::InternalReference(Asset scene, int supersample)
    : scene_(std::move(scene)), supersample_(supersample) {
  int s = 1;
  while (s * s < supersample) ++s;
  if (supersample < 1 || s * s != supersample)
    throw std::invalid_argument("supersample count must be a perfect square, got " +
                                std::to_string(supersample));
  if (!scene_.finalized) finalize(scene_);
  for (std::size_t i = 0; i < scene_.params.size(); ++i) scene_.params.at(i).learnable = false;
}

Image InternalReference::fetch(const View& view, std::size_t, const RenderOptions& options) const {
  return render_supersampled(scene_, view, options, supersample_);
}

namespace {

Mat4 matrix_field(const json& rec, const char* key, std::size_t index) {
  auto where = "manifest record " + std::to_string(index) + ": ";
  if (!rec.contains(key)) throw ConfigError(where + "missing '" + key + "'");
  const auto& j = rec[key];
  if (!j.is_array() || j.size() != 16) throw ConfigError(where + "'" + key + "' must be 16 numbers");
  Mat4 m;
  for (int i = 0; i < 16; ++i) {
    if (!j[i].is_number()) throw ConfigError(where + "'" + key + "' must be 16 numbers");
    m.m[i] = j[i].get<double>();
  }
  return m;
}

Vec3d vec_field(const json& rec, const char* key, std::size_t index) {
  auto where = "manifest record " + std::to_string(index) + ": ";
  if (!rec.contains(key)) throw ConfigError(where + "missing '" + key + "'");
  const auto& j = rec[key];
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw ConfigError(where + "'" + key + "' must be 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::vector<ManifestRecord> parse_manifest(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  const json* list = &j;
  if (j.is_object()) {
    if (!j.contains("views")) throw ConfigError("manifest needs a 'views' array");
    list = &j["views"];
  }
  if (!list->is_array() || list->empty()) throw ConfigError("manifest has no views");
  std::vector<ManifestRecord> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const auto& rec = (*list)[i];
    if (!rec.is_object()) throw ConfigError("manifest record " + std::to_string(i) + " is not an object");
    ManifestRecord r;
    r.view_matrix    = matrix_field(rec, "view_matrix", i);
    r.proj_matrix    = matrix_field(rec, "proj_matrix", i);
    r.light_position = vec_field(rec, "light_pos", i);
    r.light_intensity =
        rec.contains("light_intensity") ? vec_field(rec, "light_intensity", i) : Vec3d{1, 1, 1};
    if (!rec.contains("image") || !rec["image"].is_string())
      throw ConfigError("manifest record " + std::to_string(i) + ": missing 'image'");
    fs::path img = rec["image"].get<std::string>();
    r.image      = img.is_absolute() ? img.string() : (fs::path(base_dir) / img).lexically_normal().string();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ManifestRecord> load_manifest(const std::string& path) {
  auto dir = fs::path(path).parent_path().string();
  return parse_manifest(read_text_file(path), dir.empty() ? "." : dir);
}

std::string manifest_json(const std::vector<ManifestRecord>& records, const std::string& base_dir) {
  json views = json::array();
  for (const auto& r : records) {
    auto rel = fs::path(r.image).lexically_relative(base_dir).string();
    views.push_back({{"view_matrix", std::vector<double>(r.view_matrix.m.begin(), r.view_matrix.m.end())},
        {"proj_matrix", std::vector<double>(r.proj_matrix.m.begin(), r.proj_matrix.m.end())},
        {"light_pos", {r.light_position.x, r.light_position.y, r.light_position.z}},
        {"light_intensity", {r.light_intensity.x, r.light_intensity.y, r.light_intensity.z}},
        {"image", rel.empty() ? r.image : rel}});
  }
  return json{{"views", views}}.dump(1);
}

ExternalReference::ExternalReference(std::vector<ManifestRecord> records)
    : records_(std::move(records)) {
  if (records_.empty()) throw std::invalid_argument("external reference needs at least one view");
}

View ExternalReference::view(std::size_t index) const {
  const auto& r = records_.at(index);
  View        v;
  v.camera.view       = r.view_matrix;
  v.camera.projection = r.proj_matrix;
  v.light.position    = r.light_position;
  v.light.intensity   = r.light_intensity;
  return v;
}

Image ExternalReference::fetch(const View&, std::size_t index, const RenderOptions& options) const {
  const auto& r = records_.at(index);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(index); it != cache_.end()) return it->second;
  }
  auto img = load_texture(r.image, 3, true);
  if (img.width != options.width || img.height != options.height)
    throw Error(r.image + ": image is " + std::to_string(img.width) + "x" +
                std::to_string(img.height) + ", expected " + std::to_string(options.width) + "x" +
                std::to_string(options.height));
  std::lock_guard lock(mutex_);
  cache_.emplace(index, img);
  return img;
}

}  // namespace apfit
