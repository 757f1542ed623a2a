#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "ecotune/metrics.hpp"

namespace ecotune {

namespace {

[[noreturn]] void fail_errno(const std::string& what) {
  throw CheckerError(what + ": " + std::strerror(errno));
}

}  // namespace

double run_checker_command(const CheckerCommand& cmd, const Example& example,
                           const std::string& response) {
  nlohmann::json payload;
  payload["example"] = nlohmann::json::object();
  payload["example"]["id"] = example.id;
  for (const auto& [k, v] : example.fields) payload["example"][k] = v;
  payload["response"] = response;
  const std::string input = payload.dump();

  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0) fail_errno("checker pipe");
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    fail_errno("checker pipe");
  }

  const pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    fail_errno("checker fork");
  }
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(cmd.path.c_str()));
    for (const auto& a : cmd.args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    execvp(cmd.path.c_str(), argv.data());
    _exit(127);
  }

  close(in_pipe[0]);
  close(out_pipe[1]);

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(cmd.timeout_seconds);
  const auto remaining_ms = [&] {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    return static_cast<int>(std::max<std::int64_t>(0, left.count()));
  };
  const auto abort_child = [&](const std::string& why) -> double {
    kill(pid, SIGKILL);
    int status = 0;
    waitpid(pid, &status, 0);
    close(in_pipe[1]);
    close(out_pipe[0]);
    throw CheckerError(why);
  };

  // Feed stdin and drain stdout under one poll loop so a checker that
  // fills its output pipe before reading all input cannot deadlock us.
  std::size_t written = 0;
  std::string output;
  bool stdin_open = true;
  fcntl(in_pipe[1], F_SETFL, O_NONBLOCK);
  while (true) {
    struct pollfd fds[2];
    nfds_t nfds = 0;
    fds[nfds++] = {out_pipe[0], POLLIN, 0};
    if (stdin_open) fds[nfds++] = {in_pipe[1], POLLOUT, 0};

    const int rc = poll(fds, nfds, remaining_ms());
    if (rc < 0) {
      if (errno == EINTR) continue;
      abort_child(std::string("checker poll: ") + std::strerror(errno));
    }
    if (rc == 0)
      abort_child("checker '" + cmd.path + "' timed out after " +
                  std::to_string(cmd.timeout_seconds) + "s");

    if (fds[0].revents & (POLLIN | POLLHUP)) {
      char buf[4096];
      const ssize_t n = read(out_pipe[0], buf, sizeof(buf));
      if (n > 0) {
        output.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0) {
        break;  // checker finished writing
      } else if (errno != EINTR && errno != EAGAIN) {
        abort_child(std::string("checker read: ") + std::strerror(errno));
      }
    }
    if (stdin_open && nfds > 1 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      if (written < input.size()) {
        const ssize_t n = write(in_pipe[1], input.data() + written,
                                input.size() - written);
        if (n > 0) {
          written += static_cast<std::size_t>(n);
        } else if (n < 0 && errno != EINTR && errno != EAGAIN) {
          // Checker closed stdin early; acceptable as long as it prints a
          // score.
          close(in_pipe[1]);
          stdin_open = false;
        }
      }
      if (stdin_open && written == input.size()) {
        close(in_pipe[1]);
        stdin_open = false;
      }
    }
  }
  if (stdin_open) close(in_pipe[1]);
  close(out_pipe[0]);

  int status = 0;
  if (waitpid(pid, &status, 0) < 0) fail_errno("checker waitpid");
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    std::ostringstream msg;
    msg << "checker '" << cmd.path << "' ";
    if (WIFEXITED(status))
      msg << "exited with status " << WEXITSTATUS(status);
    else if (WIFSIGNALED(status))
      msg << "was killed by signal " << WTERMSIG(status);
    throw CheckerError(msg.str());
  }

  std::istringstream out(output);
  double score = 0.0;
  if (!(out >> score))
    throw CheckerError("checker '" + cmd.path +
                       "' printed no score (got: '" + output + "')");
  if (score < 0.0 || score > 1.0)
    throw CheckerError("checker '" + cmd.path + "' printed " +
                       std::to_string(score) + ", outside [0, 1]");
  return score;
}

}  // namespace ecotune
