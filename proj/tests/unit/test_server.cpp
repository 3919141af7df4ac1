#include <gtest/gtest.h>

#include <fstream>

#include <httplib.h>

#include "replica/triage.hpp"
#include "session_fixture.hpp"
#include "synth.hpp"

namespace replica::triage {
namespace {

using nlohmann::json;

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    test::write_session(dir_.path());
    service_ = std::make_unique<TriageService>(load_session(dir_.path()));
    server_ = std::make_unique<TriageServer>(*service_);
    port_ = server_->start("127.0.0.1", 0);
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override { server_->stop(); }

  json get_json(const std::string& path, int expected_status = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expected_status) << path << ": " << res->body;
    return json::parse(res->body);
  }

  httplib::Result post(const json& body) {
    return client_->Post("/api/verdicts", body.dump(), "application/json");
  }

  test::TempDir dir_{"server"};
  std::unique_ptr<TriageService> service_;
  std::unique_ptr<TriageServer> server_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

TEST_F(ServerTest, SessionAndPairs) {
  EXPECT_GT(port_, 0);
  const auto info = get_json("/api/session");
  EXPECT_EQ(info["progress"]["pairs_total"], 5);
  EXPECT_EQ(info["retrievals"][0]["label"], "mel");
  EXPECT_FALSE(info["rubric"].get<std::string>().empty());

  const auto page = get_json("/api/pairs?offset=3&limit=10");
  EXPECT_EQ(page["total"], 5);
  ASSERT_EQ(page["pairs"].size(), 2u);
  EXPECT_EQ(page["pairs"][0]["descriptor"], "clap");
  get_json("/api/pairs?filter=sideways", 400);
  get_json("/api/pairs?limit=-1", 400);
}

TEST_F(ServerTest, VerdictsAreRecordedAndSummarized) {
  auto res = post({{"query", "q1"}, {"reference", "r1"}, {"label", "replicated"},
                   {"annotator", "ann"}, {"note", "same riff"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["status"], "recorded");
  res = post({{"query", "q1"}, {"reference", "r1"}, {"label", "replicated"},
              {"annotator", "ann"}, {"note", "same riff"}});
  EXPECT_EQ(json::parse(res->body)["status"], "unchanged");

  res = post({{"kind", "cluster"}, {"component_id", 0}, {"label", "rejected"}, {"annotator", "ann"}});
  EXPECT_EQ(res->status, 200);

  const auto summary = get_json("/api/summary?policy=any_positive");
  EXPECT_EQ(summary["policy"], "any_positive");
  EXPECT_EQ(summary["by_descriptor"]["mel"]["replicated"], 1);
  EXPECT_EQ(summary["clusters"]["rejected"], 1);
  EXPECT_EQ(get_json("/api/summary?annotator=nobody")["overall"]["reviewed"], 0);
  get_json("/api/summary?policy=loudest", 400);

  const auto replicated = get_json("/api/pairs?filter=replicated");
  EXPECT_EQ(replicated["total"], 2);
  EXPECT_EQ(replicated["pairs"][0]["verdicts"]["ann"]["note"], "same riff");

  const auto clusters = get_json("/api/clusters");
  EXPECT_EQ(clusters["clusters"][0]["status"], "rejected");
  EXPECT_EQ(clusters["clusters"][0]["members"][0]["audio"], "/api/clips/r0/audio");
}

TEST_F(ServerTest, BadRequestsAre400) {
  auto res = client_->Post("/api/verdicts", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_TRUE(json::parse(res->body).contains("error"));
  res = post({{"query", "q0"}, {"reference", "r9"}, {"label", "unsure"}, {"annotator", "a"}});
  EXPECT_EQ(res->status, 400);
  res = post({{"query", "q0"}, {"reference", "r0"}, {"label", "great"}, {"annotator", "a"}});
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(service_->store().log_size(), 0u);
}

TEST_F(ServerTest, ClipMedia) {
  auto res = client_->Get("/api/clips/q1/audio");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "audio/wav");
  EXPECT_EQ(res->body, test::read_file(dir_ / "q1.wav"));

  res = client_->Get("/api/clips/q0/spectrogram");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(res->body.substr(1, 3), "PNG");
  EXPECT_EQ(client_->Get("/api/clips/q0/spectrogram")->body, res->body);

  EXPECT_EQ(client_->Get("/api/clips/missing/audio")->status, 404);
  EXPECT_EQ(client_->Get("/api/clips/missing/spectrogram")->status, 404);
}

TEST_F(ServerTest, IndexPage) {
  auto res = client_->Get("/");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_NE(res->body.find("<html"), std::string::npos);
}

TEST(TriageServerStatic, ServesStaticDirectory) {
  test::TempDir dir("static");
  test::write_session(dir / "session");
  std::filesystem::create_directories(dir / "www");
  std::ofstream(dir / "www" / "index.html") << "<html>custom</html>";
  TriageService svc(load_session(dir / "session"));
  TriageServer server(svc, dir / "www");
  const int port = server.start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/index.html");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->body, "<html>custom</html>");
  EXPECT_EQ(client.Get("/api/session")->status, 200);
  server.stop();
}

}  // namespace
}  // namespace replica::triage
