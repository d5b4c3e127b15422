#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "helmetcv/errors.hpp"
#include "helmetcv/remote.hpp"

using namespace helmetcv;
using nlohmann::json;

namespace {

class FakeImages final : public ImageSource {
 public:
  std::string png(const ImageKey& key, std::optional<ImageSize> resize_to) override {
    std::lock_guard lock(mu);
    last_key = key.str();
    last_resize = resize_to;
    return "PNG:" + key.str();
  }
  std::mutex mu;
  std::string last_key;
  std::optional<ImageSize> last_resize;
};

/// In-process stand-in for the inference service.
class FakeService {
 public:
  FakeService() {
    server_.Post("/detect", [this](const httplib::Request& req, httplib::Response& res) {
      ++detect_calls;
      if (!req.has_file("image") || !req.has_file("prompt") || !req.has_file("threshold")) {
        res.status = 400;
        res.set_content(R"({"error":"missing field"})", "application/json");
        return;
      }
      {
        std::lock_guard lock(mu_);
        last_image = req.get_file_value("image").content;
        last_prompt = req.get_file_value("prompt").content;
        last_threshold = req.get_file_value("threshold").content;
      }
      if (fail_with != 0) {
        res.status = fail_with;
        res.set_content(R"({"error":"model exploded"})", "application/json");
        return;
      }
      res.set_content(detect_body, "application/json");
    });
    server_.Post("/classify_seat", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_file("image")) {
        res.status = 400;
        return;
      }
      res.set_content(seat_body, "application/json");
    });
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::string detect_body =
      R"({"detections":[{"x":1,"y":2,"w":3,"h":4,"score":0.35},{"x":10,"y":20,"w":30,"h":40,"score":0.9}]})";
  std::string seat_body = R"({"role":"passenger1","confidence":0.8})";
  int fail_with = 0;
  std::atomic<int> detect_calls{0};
  std::string last_image, last_prompt, last_threshold;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
};

RemoteOptions options_for(const std::string& url) {
  RemoteOptions o;
  o.base_url = url;
  o.timeout = std::chrono::seconds(5);
  return o;
}

DetectionRequest whole_frame(double threshold) {
  return {ImageKey::parse("001/7"), "motorcycle", threshold, kModelInputSize};
}

}  // namespace

TEST(RemoteDetector, SendsMultipartAndParsesDetections) {
  FakeService service;
  FakeImages images;
  RemoteDetector det(images, options_for(service.url()));
  const auto out = det.detect(whole_frame(0.3));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.9);
  EXPECT_EQ(out[0].box, (Box{10, 20, 30, 40, CoordSpace::model_input()}));
  EXPECT_EQ(out[0].prompt, "motorcycle");
  EXPECT_EQ(service.last_image, "PNG:001/7");
  EXPECT_EQ(service.last_prompt, "motorcycle");
  EXPECT_EQ(service.last_threshold, "0.3");
  EXPECT_EQ(images.last_resize, kModelInputSize);
}

TEST(RemoteDetector, CropBoxesAreInCropSpace) {
  FakeService service;
  FakeImages images;
  RemoteDetector det(images, options_for(service.url()));
  const auto out = det.detect({ImageKey::parse("001/7@100,200,50,60"), "person", 0.0, std::nullopt});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].box.space, CoordSpace::crop({100, 200}));
  EXPECT_EQ(images.last_key, "001/7@100,200,50,60");
}

TEST(RemoteDetector, ClientSideThresholdFilter) {
  FakeService service;
  FakeImages images;
  RemoteDetector det(images, options_for(service.url()));
  EXPECT_EQ(det.detect(whole_frame(0.5)).size(), 1u);
}

TEST(RemoteDetector, InvalidThresholdNeverReachesTheService) {
  FakeService service;
  FakeImages images;
  RemoteDetector det(images, options_for(service.url()));
  EXPECT_THROW(det.detect(whole_frame(1.5)), UsageError);
  EXPECT_EQ(service.detect_calls.load(), 0);
}

TEST(RemoteDetector, EmptyResultIsNotAnError) {
  FakeService service;
  service.detect_body = R"({"detections":[]})";
  FakeImages images;
  RemoteDetector det(images, options_for(service.url()));
  EXPECT_TRUE(det.detect(whole_frame(0.5)).empty());
}

TEST(RemoteDetector, ServerErrorIsRemoteError) {
  FakeService service;
  service.fail_with = 500;
  FakeImages images;
  RemoteDetector det(images, options_for(service.url()));
  try {
    det.detect(whole_frame(0.5));
    FAIL();
  } catch (const RemoteError& e) {
    EXPECT_EQ(e.status(), 500);
    EXPECT_NE(std::string(e.what()).find("model exploded"), std::string::npos);
  }
}

TEST(RemoteDetector, OutOfRangeScoreIsRejected) {
  FakeService service;
  service.detect_body = R"({"detections":[{"x":1,"y":2,"w":3,"h":4,"score":1.7}]})";
  FakeImages images;
  RemoteDetector det(images, options_for(service.url()));
  EXPECT_THROW(det.detect(whole_frame(0.0)), ParseError);
}

TEST(RemoteDetector, UnreachableServiceIsTransportError) {
  std::string url;
  {
    FakeService gone;
    url = gone.url();
  }
  FakeImages images;
  auto opts = options_for(url);
  opts.timeout = std::chrono::seconds(1);
  RemoteDetector det(images, opts);
  EXPECT_THROW(det.detect(whole_frame(0.5)), TransportError);
  EXPECT_FALSE(det.healthy());
}

TEST(RemoteDetector, HealthRepeatedly) {
  FakeService service;
  FakeImages images;
  RemoteDetector det(images, options_for(service.url()));
  for (int i = 0; i < 100; ++i) ASSERT_TRUE(det.healthy());
}

TEST(RemoteDetector, ConcurrentRequests) {
  FakeService service;
  FakeImages images;
  RemoteDetector det(images, options_for(service.url()));
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 5; ++i) {
        if (det.detect(whole_frame(0.3)).size() == 2) ++ok;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), 40);
}

TEST(RemoteSeatClassifier, ReadsRole) {
  FakeService service;
  FakeImages images;
  RemoteSeatClassifier seats(images, options_for(service.url()));
  EXPECT_EQ(seats.classify(ImageKey::parse("001/7@1,2,3,4")), SeatRole::Passenger1);
  service.seat_body = R"({"role":"pilot"})";
  EXPECT_THROW(seats.classify(ImageKey::parse("001/7@1,2,3,4")), ParseError);
}

TEST(RemoteOptions, EnvironmentTimeout) {
  RemoteOptions o;
  ::setenv("HELMETCV_REMOTE_TIMEOUT", "7", 1);
  o.apply_environment();
  EXPECT_EQ(o.timeout, std::chrono::seconds(7));
  ::setenv("HELMETCV_REMOTE_TIMEOUT", "soon", 1);
  EXPECT_THROW(o.apply_environment(), UsageError);
  ::unsetenv("HELMETCV_REMOTE_TIMEOUT");
}

TEST(FrameStore, CropsAndResizes) {
  const auto root = std::filesystem::path(::testing::TempDir()) / "helmetcv_frames";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root / "001");
  cv::Mat frame(108, 192, CV_8UC3, cv::Scalar(10, 20, 30));
  ASSERT_TRUE(cv::imwrite((root / "001" / "3.png").string(), frame));

  FrameStore store(root);
  const auto decode = [](const std::string& png) {
    std::vector<uchar> buf(png.begin(), png.end());
    return cv::imdecode(buf, cv::IMREAD_COLOR);
  };
  const cv::Mat whole = decode(store.png(ImageKey::parse("001/3"), ImageSize{96, 96}));
  EXPECT_EQ(whole.cols, 96);
  EXPECT_EQ(whole.rows, 96);
  const cv::Mat crop = decode(store.png(ImageKey::parse("001/3@10,20,30,40"), std::nullopt));
  EXPECT_EQ(crop.cols, 30);
  EXPECT_EQ(crop.rows, 40);
  EXPECT_EQ(crop.at<cv::Vec3b>(0, 0), cv::Vec3b(10, 20, 30));
  EXPECT_THROW(store.png(ImageKey::parse("001/4"), std::nullopt), NotFoundError);
}
