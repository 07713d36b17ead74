#include <doctest.h>

#include <atomic>
#include <condition_variable>
#include <csignal>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include "scriptalign/errors.hpp"
#include "scriptalign/session_service.hpp"
#include "test_support.hpp"

using namespace scriptalign;

namespace {

ServiceOptions options_for(const std::filesystem::path& dir) {
  ServiceOptions options;
  options.data_dir = dir;
  options.engine = testing::engine_config();
  options.label_map = std::make_shared<LabelMap>(testing::core3());
  options.instruments = load_survey_instruments(default_assets_dir() / "surveys");
  auto clock = std::make_shared<std::int64_t>(1'700'000'000'000);
  options.clock = [clock] { return *clock += 1000; };
  auto counter = std::make_shared<int>(0);
  options.new_session_id = [counter] { return "s" + std::to_string(++*counter); };
  return options;
}

std::unique_ptr<SessionService> open_service(const std::filesystem::path& dir) {
  auto service = std::make_unique<SessionService>(testing::corpus(), options_for(dir));
  service->register_backend("scriptfaithful", std::make_shared<ScriptFaithfulMock>());
  service->register_backend("freeform", std::make_shared<FreeformMock>());
  return service;
}

/// Blocks inside complete() until released.
class GateBackend : public Backend {
 public:
  std::string name() const override { return "gate"; }
  void open_gate() {
    std::lock_guard lock(mutex_);
    open_ = true;
    cv_.notify_all();
  }
  void close_gate() {
    std::lock_guard lock(mutex_);
    open_ = false;
    waiting_from_ = entered_;
  }
  bool wait_entered() {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, std::chrono::seconds(5), [&] { return entered_ > waiting_from_; });
  }

 protected:
  Completion do_complete(const CompletionRequest& request) override {
    std::unique_lock lock(mutex_);
    ++entered_;
    cv_.notify_all();
    cv_.wait(lock, [&] { return open_; });
    lock.unlock();
    return inner_.complete(request);
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  bool open_ = true;
  int entered_ = 0;
  int waiting_from_ = 0;
  ScriptFaithfulMock inner_;
};

/// A short scripted conversation: click the first option whenever one is offered.
void converse(SessionService& service, const std::string& id, BotTurn turn, int messages) {
  for (int i = 0; i < messages && !turn.done; ++i) {
    auto input = turn.options.empty() ? UserInput::free_text("I guess I could try walking more.")
                                      : UserInput::option(turn.options.front().option_id);
    turn = service.post_message(id, input);
  }
}

std::string state_dump(const SessionService& service, const std::string& id) {
  return engine_state_to_json(service.engine_state(id)).dump();
}

}  // namespace

TEST_CASE("create, post and survey") {
  testing::TempDir dir;
  auto service = open_service(dir.path());
  auto created = service->create_session(Condition::RuleBased, "confidence_rating", "");
  CHECK(created.session_id == "s1");
  REQUIRE(created.turn.options.size() == 2);

  auto turn = service->post_message(created.session_id, UserInput::option("opt_2"));
  CHECK(turn.done);
  auto view = service->get_session(created.session_id);
  CHECK(view.completed);
  CHECK(view.backend == kNoBackend);
  CHECK(view.transcript.completed_flag);
  REQUIRE(view.transcript.turns.size() == 3);
  CHECK(view.transcript.turns[1].role == Speaker::User);
  CHECK(view.transcript.turns[1].option_id == "opt_2");
  CHECK(view.transcript.turns[1].text == testing::corpus().topic("confidence_rating").node("opt_2").text);
  CHECK_THROWS_AS(service->post_message(created.session_id, UserInput::free_text("more")), SessionComplete);

  SurveyResponse response{created.session_id, "engagement", {}, 0};
  for (const auto& item : service->instruments().at("engagement").items) response.answers.push_back({item.id, 4});
  service->submit_survey(response);
  CHECK(service->get_session(created.session_id).surveys == std::vector<std::string>{"engagement"});
  CHECK_THROWS_AS(service->submit_survey(response), Conflict);

  SUBCASE("survey validation") {
    SurveyResponse bad{created.session_id, "bus", {{service->instruments().at("bus").items[0].id, 6}}, 0};
    CHECK_THROWS_AS(service->submit_survey(bad), RangeError);
    bad.answers[0].likert = 0;
    CHECK_THROWS_AS(service->submit_survey(bad), RangeError);
    bad.answers = {{"no_such_item", 3}};
    CHECK_THROWS_AS(service->submit_survey(bad), BadRequest);
    bad.answers.clear();
    CHECK_THROWS_AS(service->submit_survey(bad), BadRequest);
    bad.instrument_id = "nope";
    CHECK_THROWS_AS(service->submit_survey(bad), UnknownInstrument);
    bad.session_id = "missing";
    CHECK_THROWS_AS(service->submit_survey(bad), NotFound);
  }
}

TEST_CASE("service errors") {
  testing::TempDir dir;
  auto service = open_service(dir.path());
  CHECK_THROWS_AS(service->create_session(Condition::RuleBased, "nope", ""), UnknownTopic);
  CHECK_THROWS_AS(service->create_session(Condition::SagPrompt, "confidence_rating", "nope"), UnknownBackend);
  CHECK_THROWS_AS(service->post_message("missing", UserInput::free_text("hi")), NotFound);
  CHECK_THROWS_AS(service->get_session("missing"), NotFound);

  auto created = service->create_session(Condition::RuleBased, "confidence_rating", "");
  CHECK_THROWS_AS(service->post_message(created.session_id, UserInput::option("r_high")), InvalidOption);
  // The failed step is logged but the session can continue.
  auto events = service->session_events(created.session_id);
  CHECK(events.back()["type"] == "Error");
  CHECK(service->post_message(created.session_id, UserInput::option("opt_1")).texts.size() >= 1);
}

TEST_CASE("a concurrent step on the same session is Busy") {
  testing::TempDir dir;
  auto service = open_service(dir.path());
  auto gate = std::make_shared<GateBackend>();
  service->register_backend("gate", gate);
  auto created = service->create_session(Condition::SagPrompt, "exploring_barriers", "gate");
  auto other = service->create_session(Condition::SagPrompt, "exploring_barriers", "scriptfaithful");

  gate->close_gate();
  std::thread first([&] { service->post_message(created.session_id, UserInput::free_text("time")); });
  REQUIRE(gate->wait_entered());
  CHECK_THROWS_AS(service->post_message(created.session_id, UserInput::free_text("again")), Busy);
  // Other sessions are not blocked.
  CHECK_NOTHROW(service->post_message(other.session_id, UserInput::free_text("energy")));
  gate->open_gate();
  first.join();
  CHECK(service->get_session(created.session_id).transcript.turns.size() >= 3);
}

TEST_CASE("parallel sessions keep their own logs") {
  testing::TempDir dir;
  auto service = open_service(dir.path());
  std::vector<std::string> ids;
  std::vector<BotTurn> openings;
  for (int i = 0; i < 8; ++i) {
    auto created = service->create_session(Condition::Ssag, "should_statements", "scriptfaithful");
    ids.push_back(created.session_id);
    openings.push_back(created.turn);
  }
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < ids.size(); ++i)
    threads.emplace_back([&, i] { converse(*service, ids[i], openings[i], 12); });
  for (auto& t : threads) t.join();
  auto reopened = open_service(dir.path());
  for (const auto& id : ids) CHECK(state_dump(*service, id) == state_dump(*reopened, id));
}

TEST_CASE("restart replays every condition to identical state") {
  testing::TempDir dir;
  std::map<std::string, std::string> dumps;
  std::map<std::string, Transcript> transcripts;
  {
    auto service = open_service(dir.path());
    for (auto condition : kAllConditions) {
      for (const auto& topic : {"exploring_barriers", "supportive_social_environment"}) {
        const std::string backend = condition == Condition::RuleBased ? "" : "scriptfaithful";
        auto created = service->create_session(condition, topic, backend);
        converse(*service, created.session_id, created.turn, 4);
        dumps[created.session_id] = state_dump(*service, created.session_id);
        transcripts[created.session_id] = service->get_session(created.session_id).transcript;
      }
    }
  }
  auto service = open_service(dir.path());
  CHECK(service->session_ids().size() == dumps.size());
  for (const auto& [id, dump] : dumps) {
    CAPTURE(id);
    CHECK(state_dump(*service, id) == dump);
    CHECK(service->get_session(id).transcript == transcripts[id]);
  }
}

TEST_CASE("export filters and feeds metrics") {
  testing::TempDir dir;
  auto service = open_service(dir.path());
  for (const auto& topic : {"confidence_rating", "should_statements"}) {
    auto a = service->create_session(Condition::RuleBased, topic, "");
    converse(*service, a.session_id, a.turn, 20);
    auto b = service->create_session(Condition::SagPrompt, topic, "freeform");
    converse(*service, b.session_id, b.turn, 3);
  }
  CHECK(service->export_transcripts().size() == 4);
  auto rule = service->export_transcripts(Condition::RuleBased);
  CHECK(rule.size() == 2);
  CHECK(service->export_transcripts(Condition::SagPrompt, std::string("confidence_rating")).size() == 1);
  CHECK(service->export_transcripts(Condition::Ssag).empty());

  testing::TempDir out;
  for (const auto& t : service->export_transcripts()) save_transcript(out / (t.session_id + ".jsonl"), t);
  auto reports = compute_metrics_by_condition(load_transcript_dir(out.path()), testing::corpus());
  CHECK(reports[Condition::RuleBased].metric1_ratio == 1.0);
  CHECK(reports[Condition::RuleBased].metric2_ratio == 1.0);
  CHECK(reports[Condition::SagPrompt].metric1_ratio == 0.0);
  CHECK(reports[Condition::SagPrompt].metric2_ratio == 0.0);
}

TEST_CASE("event store recovery") {
  testing::TempDir dir;
  std::string id;
  {
    auto service = open_service(dir.path());
    auto created = service->create_session(Condition::RuleBased, "confidence_rating", "");
    id = created.session_id;
  }
  const auto log = dir / "events.jsonl";
  const auto intact = testing::read_file(log);

  SUBCASE("a torn last line is cut off") {
    testing::write_file(log, intact + "{\"session_id\":\"s1\",\"events\":[{\"type\":\"Mess");
    auto service = open_service(dir.path());
    CHECK(service->session_ids() == std::vector<std::string>{id});
    CHECK(testing::read_file(log) == intact);
    CHECK_NOTHROW(service->post_message(id, UserInput::option("opt_1")));
  }
  SUBCASE("a corrupt line before the end is an error") {
    testing::write_file(log, "garbage\n" + intact);
    CHECK_THROWS_AS(open_service(dir.path()), IoError);
  }
  SUBCASE("store reports recovered bytes") {
    testing::write_file(log, intact + "{\"partial");
    EventStore store(log);
    CHECK(store.recovered_bytes() == std::string("{\"partial").size());
    CHECK(store.groups().size() == 1);
  }
}

TEST_CASE("a killed process loses at most the step in flight") {
  testing::TempDir dir;
  testing::TempDir reference;
  const int steps = 5;

  pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    auto service = open_service(dir.path());
    auto created = service->create_session(Condition::SagPrompt, "exploring_barriers", "scriptfaithful");
    converse(*service, created.session_id, created.turn, steps);
    ::kill(::getpid(), SIGKILL);
    _exit(1);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  CHECK(WIFSIGNALED(status));

  auto expected = open_service(reference.path());
  auto created = expected->create_session(Condition::SagPrompt, "exploring_barriers", "scriptfaithful");
  converse(*expected, created.session_id, created.turn, steps);

  auto recovered = open_service(dir.path());
  REQUIRE(recovered->session_ids() == std::vector<std::string>{created.session_id});
  CHECK(state_dump(*recovered, created.session_id) == state_dump(*expected, created.session_id));
  CHECK(recovered->get_session(created.session_id).transcript == expected->get_session(created.session_id).transcript);
}

TEST_CASE("random session ids") {
  std::set<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.insert(random_session_id());
  CHECK(ids.size() == 100);
  CHECK(ids.begin()->size() == 22);
}
