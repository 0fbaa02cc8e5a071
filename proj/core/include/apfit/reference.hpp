// Reference image providers: the internal supersampled renderer over a
// reference asset, and an external manifest of pre-rendered images.

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "apfit/render.hpp"

namespace apfit {

class ReferenceProvider {
 public:
  virtual ~ReferenceProvider() = default;

  // External providers only serve their recorded views.
  virtual bool        has_fixed_views() const = 0;
  virtual std::size_t view_count() const { return 0; }
  virtual View        view(std::size_t index) const;

  // Linear HDR image at options.width x options.height. `index` selects the
  // record for fixed-view providers and is ignored otherwise.
  virtual Image fetch(const View& view, std::size_t index, const RenderOptions& options) const = 0;
};

class InternalReference : public ReferenceProvider {
 public:
  // Every reference tensor is frozen. supersample must be a perfect square.
  InternalReference(Asset scene, int supersample);

  bool  has_fixed_views() const override { return false; }
  Image fetch(const View& view, std::size_t index, const RenderOptions& options) const override;

  const Asset& scene() const { return scene_; }
  int          supersample() const { return supersample_; }

 private:
  Asset scene_;
  int   supersample_;
};

struct ManifestRecord {
  Mat4        view_matrix;
  Mat4        proj_matrix;
  Vec3d       light_position;
  Vec3d       light_intensity;
  std::string image;  // resolved path
};

// Throws ConfigError on malformed JSON or records.
std::vector<ManifestRecord> parse_manifest(const std::string& json_text, const std::string& base_dir);
std::vector<ManifestRecord> load_manifest(const std::string& path);
std::string                 manifest_json(const std::vector<ManifestRecord>& records,
                    const std::string& base_dir);

class ExternalReference : public ReferenceProvider {
 public:
  explicit ExternalReference(std::vector<ManifestRecord> records);

  bool        has_fixed_views() const override { return true; }
  std::size_t view_count() const override { return records_.size(); }
  View        view(std::size_t index) const override;
  // PFM images are linear; PNG images are sRGB-decoded. Throws Error naming
  // the path when the file is missing or its size differs from the request.
  Image fetch(const View& view, std::size_t index, const RenderOptions& options) const override;

  const std::vector<ManifestRecord>& records() const { return records_; }

 private:
  std::vector<ManifestRecord>          records_;
  mutable std::mutex                   mutex_;
  mutable std::map<std::size_t, Image> cache_;
};

}  // namespace apfit
