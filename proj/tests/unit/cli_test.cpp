#include <gtest/gtest.h>

#include <sys/stat.h>
#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <string>

#include "support.hpp"

using namespace sensorlink::testing;

namespace {

struct Result {
  int rc = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(SENSORLINK_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  char buf[4096];
  while (auto n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// A server running for a bounded time in the background; the ready line
// carries its ports.
class BackgroundServe {
 public:
  explicit BackgroundServe(const std::string& args) {
    const std::string cmd = std::string(SENSORLINK_CLI) + " serve " + args + " 2>/dev/null";
    pipe_ = ::popen(cmd.c_str(), "r");
    char line[512] = {};
    if (pipe_ != nullptr && std::fgets(line, sizeof line, pipe_) != nullptr) ready = nlohmann::json::parse(line, nullptr, false);
  }
  ~BackgroundServe() { wait(); }
  int wait() {
    if (pipe_ == nullptr) return rc_;
    const int status = ::pclose(pipe_);
    pipe_ = nullptr;
    rc_ = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return rc_;
  }

  nlohmann::json ready;

 private:
  FILE* pipe_ = nullptr;
  int rc_ = -1;
};

std::string key_file() { return (golden_dir() / "test_server_key.pem").string(); }

}  // namespace

TEST(Cli, Version) {
  auto r = run("--version");
  EXPECT_EQ(r.rc, 0);
  EXPECT_NE(r.out.find("0.1.0"), std::string::npos);
}

TEST(Cli, UsageErrorsAreConfigErrors) {
  EXPECT_EQ(run("serve").rc, 2);  // --key is required
  EXPECT_EQ(run("no-such-command").rc, 2);
  EXPECT_EQ(run("upload --server-key /nonexistent --duration 1").rc, 2);
}

TEST(Cli, KeygenWritesProtectedKeyPair) {
  TempDir dir;
  const auto out = (dir / "k.pem").string();
  auto r = run("keygen --bits 2048 --out " + out);
  ASSERT_EQ(r.rc, 0) << r.out;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["bits"], 2048);
  struct stat st{};
  ASSERT_EQ(::stat(out.c_str(), &st), 0);
  EXPECT_EQ(st.st_mode & 0777, 0600u);
  EXPECT_TRUE(std::filesystem::exists(out + ".pub"));
  EXPECT_EQ(run("keygen --bits 2048 --out " + out).rc, 2);  // refuses to overwrite
  EXPECT_EQ(run("keygen --bits 2048 --force --out " + out).rc, 0);
  EXPECT_EQ(run("keygen --bits 1000 --out " + (dir / "x.pem").string()).rc, 2);
}

TEST(Cli, ServeUploadStatsRoundTrip) {
  TempDir dir;
  const auto db = (dir / "s.db").string();
  BackgroundServe serve("--key " + key_file() + " --auth-port 0 --data-port 0 --storage sqlite:" + db +
                        " --run-for 8");
  ASSERT_TRUE(serve.ready.is_object()) << "no ready line";
  const auto ports = " --auth-port " + std::to_string(serve.ready["auth_port"].get<int>()) + " --data-port " +
                     std::to_string(serve.ready["data_port"].get<int>());
  const auto journal = (dir / "j").string();
  for (const char* transport : {"udp", "tcp"}) {
    auto up = run("upload --server-key " + key_file() + ".pub" + ports + " --transport " + transport +
                  " --email dana@example.com --start-time 1400000000 --duration 120 --journal " + journal + "-" +
                  transport);
    ASSERT_EQ(up.rc, 0) << up.out;
    auto j = nlohmann::json::parse(up.out);
    EXPECT_TRUE(j["authenticated"].get<bool>());
    EXPECT_EQ(j["delivered"], j["rows"]);
    EXPECT_EQ(j["failed"], 0);
  }
  EXPECT_EQ(serve.wait(), 0);
  auto stats = run("stats --storage sqlite:" + db);
  ASSERT_EQ(stats.rc, 0);
  // Both uploads share (hash, start time) and so one session.
  EXPECT_NE(stats.out.find("sessions 1\n"), std::string::npos) << stats.out;
  EXPECT_NE(stats.out.find("rows_gps 120\n"), std::string::npos) << stats.out;
}

TEST(Cli, UploadWithoutServerIsTransportError) {
  auto r = run("upload --server-key " + key_file() +
               ".pub --transport tcp --auth-port 1 --data-port 2 --email e@example.com --duration 5");
  EXPECT_EQ(r.rc, 3);
}

TEST(Cli, SimulateReportsVerifiedExperiment) {
  TempDir dir;
  std::ofstream(dir / "exp.conf") << "workload = typical\nduration_s = 60\nloss_prob = 0.1\nlatency_ms = 50\n"
                                  << "server_key = " << key_file() << "\n";
  auto r = run("simulate " + (dir / "exp.conf").string() + " --format json");
  ASSERT_EQ(r.rc, 0) << r.out;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j["verified"].get<bool>());
  EXPECT_EQ(j["rows_stored"], j["rows_generated"]);

  std::ofstream(dir / "bad.conf") << "bogus = 1\n";
  EXPECT_EQ(run("simulate " + (dir / "bad.conf").string()).rc, 2);
}

TEST(Cli, BenchPrintsOneRowPerWindow) {
  auto r = run("bench --server-key " + key_file() + " --windows 1,4 --duration 60 --rtt-ms 20");
  ASSERT_EQ(r.rc, 0) << r.out;
  EXPECT_NE(r.out.find("window"), std::string::npos);
  EXPECT_NE(r.out.find("\n1 "), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("\n4 "), std::string::npos) << r.out;
}
