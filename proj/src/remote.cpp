#include "helmetcv/remote.hpp"

#include <algorithm>
#include <cstdlib>
#include <vector>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "helmetcv/errors.hpp"
#include "helmetcv/text.hpp"

namespace helmetcv {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path FrameStore::frame_path(const ImageKey& key) const {
  const fs::path dir = root_ / key.video_id;
  for (const char* ext : {".png", ".jpg", ".jpeg"}) {
    fs::path p = dir / (std::to_string(key.frame_index) + ext);
    if (fs::exists(p)) return p;
  }
  throw NotFoundError(fmt::format("no image for {} under {}", key.frame_key().str(), root_.string()));
}

std::string FrameStore::png(const ImageKey& key, std::optional<ImageSize> resize_to) {
  const fs::path path = frame_path(key);
  cv::Mat image = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (image.empty()) throw NotFoundError("cannot decode " + path.string());
  if (key.crop) {
    const cv::Rect bounds(0, 0, image.cols, image.rows);
    const cv::Rect rect = cv::Rect(key.crop->x, key.crop->y, key.crop->w, key.crop->h) & bounds;
    if (rect.empty()) throw NotFoundError("crop outside image: " + key.str());
    image = image(rect).clone();
  }
  if (resize_to) {
    cv::Mat resized;
    cv::resize(image, resized, cv::Size(resize_to->width, resize_to->height), 0, 0, cv::INTER_LINEAR);
    image = resized;
  }
  std::vector<uchar> buf;
  if (!cv::imencode(".png", image, buf)) throw std::runtime_error("PNG encoding failed for " + key.str());
  return std::string(buf.begin(), buf.end());
}

void RemoteOptions::apply_environment() {
  if (const char* env = std::getenv("HELMETCV_REMOTE_TIMEOUT")) {
    const auto v = parse_int(trim(env));
    if (!v || *v <= 0) throw UsageError(fmt::format("HELMETCV_REMOTE_TIMEOUT must be a positive integer, got '{}'", env));
    timeout = std::chrono::seconds(*v);
  }
}

namespace {

std::unique_ptr<std::counting_semaphore<64>> make_limit(int max_in_flight) {
  if (max_in_flight < 1 || max_in_flight > 64) throw UsageError("max_in_flight must be in 1..64");
  return std::make_unique<std::counting_semaphore<64>>(max_in_flight);
}

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<64>& sem) : sem_(sem) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<64>& sem_;
};

httplib::Client make_client(const RemoteOptions& options) {
  httplib::Client client(options.base_url);
  if (!client.is_valid()) throw UsageError("invalid service URL '" + options.base_url + "'");
  client.set_connection_timeout(options.timeout);
  client.set_read_timeout(options.timeout);
  client.set_write_timeout(options.timeout);
  return client;
}

json checked_body(const httplib::Result& res, std::string_view endpoint) {
  if (!res) {
    throw TransportError(fmt::format("{}: {}", endpoint, httplib::to_string(res.error())));
  }
  if (res->status != 200) {
    std::string message = res->body;
    try {
      const auto j = json::parse(res->body);
      if (j.is_object() && j.contains("error") && j["error"].is_string()) message = j["error"].get<std::string>();
    } catch (const json::exception&) {
    }
    throw RemoteError(res->status, fmt::format("{}: {}", endpoint, message));
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ParseError(0, fmt::format("{}: malformed response: {}", endpoint, e.what()));
  }
}

}  // namespace

RemoteDetector::RemoteDetector(ImageSource& images, RemoteOptions options)
    : images_(images), options_(std::move(options)), in_flight_(make_limit(options_.max_in_flight)) {
  (void)make_client(options_);
}

RemoteDetector::~RemoteDetector() = default;

std::vector<ScoredDetection> RemoteDetector::detect(const DetectionRequest& request) {
  request.validate();
  const std::string image = images_.png(request.image, request.resize_to);
  const httplib::MultipartFormDataItems items{
      {"image", image, "image.png", "image/png"},
      {"prompt", request.prompt, "", ""},
      {"threshold", fmt::format("{}", request.threshold), "", ""},
  };

  json body;
  {
    SlotGuard slot(*in_flight_);
    auto client = make_client(options_);
    body = checked_body(client.Post("/detect", items), "/detect");
  }

  const auto dets = body.find("detections");
  if (!body.is_object() || dets == body.end() || !dets->is_array()) {
    throw ParseError(0, "/detect: response lacks a detections array");
  }
  const CoordSpace space = request.result_space();
  std::vector<ScoredDetection> out;
  try {
    for (const auto& d : *dets) {
      const double score = d.at("score").get<double>();
      if (!(score >= 0.0 && score <= 1.0)) throw ParseError(0, fmt::format("/detect: score {} outside [0,1]", score));
      Box box{d.at("x").get<double>(), d.at("y").get<double>(), d.at("w").get<double>(), d.at("h").get<double>(),
              space};
      if (!box.valid()) throw ParseError(0, "/detect: negative box size");
      out.push_back({box, score, request.prompt});
    }
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("/detect: bad detection: ") + e.what());
  }
  filter_and_sort(out, request.threshold);
  return out;
}

bool RemoteDetector::healthy() {
  SlotGuard slot(*in_flight_);
  auto client = make_client(options_);
  const auto res = client.Get("/health");
  if (!res || res->status != 200) return false;
  try {
    const auto j = json::parse(res->body);
    return j.value("status", "") == "ok";
  } catch (const json::exception&) {
    return false;
  }
}

std::string RemoteDetector::describe() const { return "remote(" + options_.base_url + ")"; }

RemoteSeatClassifier::RemoteSeatClassifier(ImageSource& images, RemoteOptions options)
    : images_(images), options_(std::move(options)), in_flight_(make_limit(options_.max_in_flight)) {
  (void)make_client(options_);
}

RemoteSeatClassifier::~RemoteSeatClassifier() = default;

std::optional<SeatRole> RemoteSeatClassifier::classify(const ImageKey& person_crop) {
  const std::string image = images_.png(person_crop, std::nullopt);
  const httplib::MultipartFormDataItems items{{"image", image, "crop.png", "image/png"}};
  json body;
  {
    SlotGuard slot(*in_flight_);
    auto client = make_client(options_);
    body = checked_body(client.Post("/classify_seat", items), "/classify_seat");
  }
  if (!body.is_object() || !body.contains("role") || !body["role"].is_string()) {
    throw ParseError(0, "/classify_seat: response lacks a role");
  }
  const auto role = seat_role_from_name(body["role"].get<std::string>());
  if (!role) throw ParseError(0, "/classify_seat: unknown role " + body["role"].get<std::string>());
  return role;
}

std::string RemoteSeatClassifier::describe() const { return "remote-seat(" + options_.base_url + ")"; }

}  // namespace helmetcv
