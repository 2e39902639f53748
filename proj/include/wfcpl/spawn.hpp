#pragma once

// Starting participant processes for TCP runs.

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "wfcpl/error.hpp"
#include "wfcpl/experiment.hpp"

extern char** environ;

namespace wfcpl {

/// Participant processes of one TCP run. Each child is started as
/// `<exe> run --config <file> --connect host:port --role <role>` where
/// <file> holds the orchestrator's effective config.
class ParticipantProcesses {
 public:
  ParticipantProcesses(std::string exe, const experiment::ExperimentConfig& cfg) : exe_(std::move(exe)) {
    char path[] = "/tmp/wfcpl-config-XXXXXX";
    const int fd = ::mkstemp(path);
    if (fd < 0) throw Error(ErrorCode::InvalidConfig, "cannot create a temporary config file");
    ::close(fd);
    config_path_ = path;
    std::ofstream(config_path_) << experiment::serialize_config(cfg);
  }

  ~ParticipantProcesses() {
    for (pid_t pid : pids_) {
      ::kill(pid, SIGTERM);
      ::waitpid(pid, nullptr, 0);
    }
    std::remove(config_path_.c_str());
  }

  ParticipantProcesses(const ParticipantProcesses&) = delete;
  ParticipantProcesses& operator=(const ParticipantProcesses&) = delete;

  experiment::Launcher launcher() {
    return [this](heat::Side side, const transport::Endpoint& ep) { spawn(side, ep); };
  }

  /// Waits for all children; true iff every one exited with status 0.
  bool wait() {
    bool ok = true;
    for (pid_t pid : pids_) {
      int status = 0;
      if (::waitpid(pid, &status, 0) < 0 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) ok = false;
    }
    pids_.clear();
    return ok;
  }

 private:
  void spawn(heat::Side side, const transport::Endpoint& ep) {
    std::vector<std::string> args{exe_,     "run",  "--config", config_path_, "--connect", ep.host + ":" + std::to_string(ep.port),
                                  "--role", experiment::role_name(side)};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    pid_t pid = 0;
    if (::posix_spawn(&pid, exe_.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
      throw Error(ErrorCode::ChannelClosed, "cannot start participant process " + exe_);
    }
    pids_.push_back(pid);
  }

  std::string exe_;
  std::string config_path_;
  std::vector<pid_t> pids_;
};

}  // namespace wfcpl
