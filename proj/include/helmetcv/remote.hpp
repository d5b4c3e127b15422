#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include "helmetcv/detector.hpp"
#include "helmetcv/seat.hpp"

namespace helmetcv {

/// Produces PNG bytes for an image key, optionally resized to a fixed resolution.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::string png(const ImageKey& key, std::optional<ImageSize> resize_to) = 0;
};

/// Frames stored as `<root>/<video_id>/<frame_index>.{png,jpg,jpeg}`.
class FrameStore final : public ImageSource {
 public:
  explicit FrameStore(std::filesystem::path root) : root_(std::move(root)) {}

  /// Throws NotFoundError when the frame file is missing or undecodable.
  std::string png(const ImageKey& key, std::optional<ImageSize> resize_to) override;
  std::filesystem::path frame_path(const ImageKey& key) const;

 private:
  std::filesystem::path root_;
};

struct RemoteOptions {
  /// `http://host:port`
  std::string base_url;
  std::chrono::seconds timeout{30};
  int max_in_flight = 4;

  /// Applies HELMETCV_REMOTE_TIMEOUT (seconds) when set.
  void apply_environment();
};

/// Client for the inference service's `POST /detect` and `GET /health`.
///
/// Transport failures raise TransportError; error statuses raise RemoteError.
class RemoteDetector final : public Detector {
 public:
  RemoteDetector(ImageSource& images, RemoteOptions options);
  ~RemoteDetector() override;

  std::vector<ScoredDetection> detect(const DetectionRequest& request) override;
  std::string describe() const override;
  bool healthy();

 private:
  ImageSource& images_;
  RemoteOptions options_;
  std::unique_ptr<std::counting_semaphore<64>> in_flight_;
};

/// Client for `POST /classify_seat`.
class RemoteSeatClassifier final : public SeatClassifier {
 public:
  RemoteSeatClassifier(ImageSource& images, RemoteOptions options);
  ~RemoteSeatClassifier() override;

  std::optional<SeatRole> classify(const ImageKey& person_crop) override;
  std::string describe() const override;

 private:
  ImageSource& images_;
  RemoteOptions options_;
  std::unique_ptr<std::counting_semaphore<64>> in_flight_;
};

}  // namespace helmetcv
