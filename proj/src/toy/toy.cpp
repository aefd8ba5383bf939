#include "crumq/toy/toy.hpp"

#include <random>

#include <nlohmann/json.hpp>

#include "crumq/acquire/source.hpp"
#include "crumq/core/jsonl.hpp"
#include "crumq/core/random.hpp"
#include "crumq/pipeline/pipeline.hpp"

namespace crumq::toy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kFiller{
    "river",  "survey", "report", "season", "region", "field",   "sample",  "measure", "record",
    "local",  "annual", "public", "budget", "agency", "station", "network", "review",  "summary",
    "level",  "change", "trend",  "source", "sector", "output",  "supply",  "demand",  "cost",
    "window", "phase",  "site",   "team",   "method", "result",  "figure",  "table",   "study"};

std::string filler(std::mt19937_64& rng, int words) {
    std::string out;
    for (int i = 0; i < words; ++i) {
        if (i) out += ' ';
        out += kFiller[uniform_below(rng, kFiller.size())];
    }
    return out;
}

std::string paragraph(std::mt19937_64& rng, const std::string& lead) {
    return lead + " " + filler(rng, 24) + " . " + filler(rng, 18) + " .";
}

struct Doc {
    std::string key;
    std::string title;
    std::string lead;
};

const std::vector<Doc> kGold{
    {"aldren-wetlands-survey", "Aldren wetlands survey",
     "Surveyors mapped the Aldren delta wetlands and counted marsh birds along tidal channels ."},
    {"aldren-salt-marsh", "Salt marsh retreat",
     "Salt marsh cover in the Aldren delta shrank as high tides reached further inland ."},
    {"norvale-grid-report", "Norvale grid report",
     "The Norvale grid operator added battery storage to smooth evening demand peaks ."},
    {"norvale-price-review", "Norvale price review",
     "Household energy prices in Norvale rose after a winter supply squeeze ."},
    {"kestrel-enrolment", "Kestrel enrolment update",
     "The Kestrel vaccine trial enrolled volunteers across three regional clinics ."},
    {"kestrel-safety", "Kestrel safety board",
     "A safety board reviewed early Kestrel vaccine trial data and allowed dosing to continue ."},
    {"aldren-fishery-log", "Aldren fishery log",
     "Fishing crews on the Aldren coast logged smaller catches of flatfish this spring ."},
    {"aldren-harbour-notes", "Aldren harbour notes",
     "Harbour managers on the Aldren coast moved landing schedules after repeated flooding ."},
    {"quantum-survey-pilot", "Quantum survey pilot",
     "A pilot used quantum sensors to map ore bodies beneath a mining lease ."},
    {"quantum-gravimeter", "Field gravimeter notes",
     "Mining geologists compared quantum gravimeter readings with drill core results ."},
};

const std::vector<Doc> kDistractors{
    {"city-library", "City library hours", "The city library extended weekend opening hours ."},
    {"rail-timetable", "Rail timetable", "A new rail timetable added two morning services ."},
    {"school-meals", "School meals", "School meals now include a second vegetable option ."},
    {"bridge-repairs", "Bridge repairs", "Bridge repairs closed one lane for six weeks ."},
    {"park-survey", "Park survey", "A park survey counted visitors at four entrances ."},
    {"museum-loans", "Museum loans", "The museum lent three paintings to a touring show ."},
    {"road-salt", "Road salt stocks", "Road salt stocks were refilled before the first frost ."},
    {"choir-festival", "Choir festival", "Twelve choirs performed at the spring festival ."},
};

struct Req {
    std::string key;
    std::string text;
    std::vector<std::string> gold;
    std::string tag;         // word identifying the request in mock rules
    std::string keyphrases;  // scripted extraction output
};

const std::vector<Req> kRequests{
    {"req-wetlands", "How are the Aldren delta wetlands responding to rising seas?",
     {"aldren-wetlands-survey", "aldren-salt-marsh"}, "wetlands", "aldren delta wetlands; sea level rise"},
    {"req-grid", "What is driving battery storage and energy prices in Norvale?",
     {"norvale-grid-report", "norvale-price-review"}, "Norvale", "grid battery storage; norvale energy prices"},
    {"req-kestrel", "How is the Kestrel vaccine trial progressing?", {"kestrel-enrolment", "kestrel-safety"},
     "Kestrel", "kestrel vaccine trial"},
    {"req-fisheries", "What is happening to fisheries on the Aldren coast as seas rise?",
     {"aldren-fishery-log", "aldren-harbour-notes"}, "fisheries", "aldren coast fisheries; sea level rise"},
    {"req-quantum", "How are quantum sensors used in mining surveys?",
     {"quantum-survey-pilot", "quantum-gravimeter"}, "quantum", "quantum sensors mining"},
};

struct Item {
    std::string url;
    std::string title;
    std::string date;
    std::string lead;
};

struct Feed {
    std::string phrase;
    Origin source;
    std::vector<Item> items;
    int fail_times = 0;
};

const std::string kSharedUrl = "https://news.example.org/aldren-storm-surge";

const std::vector<Feed> kFeeds{
    {"aldren delta wetlands",
     Origin::google_news,
     {{kSharedUrl, "Storm surge floods Aldren lowlands", "2025-02-11",
       "A storm surge flooded Aldren lowlands and pushed seawater into delta wetlands ."},
      {"https://news.example.org/aldren-1998-drainage", "Old drainage scheme", "2018-06-02",
       "An old drainage scheme for the Aldren delta was approved ."}}},
    {"aldren delta wetlands",
     Origin::arxiv,
     {{"https://arxiv.example.org/abs/2503.01111", "Remote sensing of delta marsh loss", "2025-03-04",
       "Satellite imagery shows marsh loss in the Aldren delta accelerating since last year ."}}},
    {"sea level rise",
     Origin::google_news,
     {{"https://news.example.org/sea-gauge", "Tide gauges record new high", "2025-01-20",
       "Regional tide gauges recorded a new annual high water mark VERIFYFAIL ."}}},
    {"sea level rise",
     Origin::arxiv,
     {{"https://arxiv.example.org/abs/2501.02222", "Coastal flooding projections", "2025-01-28",
       "Updated projections raise expected coastal flooding days for the next decade ."}}},
    {"grid battery storage",
     Origin::arxiv,
     {{"https://arxiv.example.org/abs/2502.03333", "Battery dispatch at evening peaks", "2025-02-14",
       "A dispatch study found battery storage cut evening peak imports by a fifth HOPFAIL ."}}},
    {"norvale energy prices",
     Origin::google_news,
     {{"https://news.example.org/norvale-tariff", "Norvale tariff rises again", "2025-03-01",
       "Norvale regulators approved a second tariff rise for the coming quarter ."}},
     2},
    {"sodium ion cells",
     Origin::chemrxiv,
     {{"https://chemrxiv.example.org/sodium-cells", "Sodium ion cells for grid use", "2025-02-20",
       "Sodium ion cells passed a long cycling test aimed at grid storage ."}}},
    {"kestrel vaccine trial",
     Origin::pubmed,
     {{"https://pubmed.example.org/39000001", "Kestrel interim immunogenicity", "2025-01-15",
       "Interim data reported antibody responses in most Kestrel trial participants QUALFAIL ."}}},
    {"kestrel vaccine trial",
     Origin::medrxiv,
     {{"https://medrxiv.example.org/kestrel-cohort", "Kestrel cohort follow up", "2025-02-02",
       "A follow up of the first Kestrel cohort found no serious adverse events ."}}},
    {"aldren coast fisheries",
     Origin::google_news,
     {{kSharedUrl, "Storm surge floods Aldren lowlands", "2025-02-11",
       "A storm surge flooded Aldren lowlands and pushed seawater into delta wetlands ."},
      {"https://news.example.org/aldren-quota", "Aldren quota cut", "2025-03-09",
       "Authorities cut the Aldren flatfish quota after a poor spawning season ."}}},
    {"quantum sensors mining",
     Origin::arxiv,
     {{"https://arxiv.example.org/abs/2502.04444", "Portable quantum magnetometers", "2025-02-25",
       "Portable quantum magnetometers located a buried ore lens during a field trial ."},
      {"https://arxiv.example.org/abs/2502.05555", "Cafeteria menu study", "2025-02-26",
       "A cafeteria menu study compared lunch preferences OFFTOPIC ."}}},
    {"quantum sensors mining",
     Origin::biorxiv,
     {{"https://biorxiv.example.org/soil-microbes", "Soil microbes near mines", "2025-03-03",
       "Soil microbes near a mine shifted after quantum sensor surveys disturbed topsoil ."}}},
};

const std::vector<std::pair<std::string, std::string>> kTemplates{
    {"generate_qa_multidoc", "What combined finding do these reports share?|A rising pressure on the named sites"},
    {"generate_qa_comparison", "Which of the reported sites changed the most?|The site named in the newest report"},
    {"generate_qa_temporal", "When did the reported changes begin relative to each other?|The corpus change came first"},
    {"generate_qa_synthesis", "What overall consequence follows from these reports?|Planning for further losses"},
};

json rule(const std::string& prompt, std::vector<std::pair<std::string, std::string>> when,
          const std::string& response) {
    json w = json::object();
    for (auto& [slot, text] : when) w[slot] = {{"contains", text}};
    return {{"prompt_id", prompt}, {"when", w}, {"response", response}};
}

std::string jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    return out;
}

}  // namespace

json mock_rules() {
    json rules = json::array();
    for (const auto& r : kRequests) rules.push_back(rule("extract_keyphrases", {{"request", r.tag}}, r.keyphrases));
    rules.push_back(rule("ground_topic", {{"topic", "grid battery storage"}}, "sodium ion cells"));

    rules.push_back(rule("chunk_relevance", {{"chunk", kOffTopicMarker}}, "no"));

    for (const auto& [prompt, qa] : kTemplates) {
        auto bar = qa.find('|');
        auto q = qa.substr(0, bar), a = qa.substr(bar + 1);
        for (const char* marker : {kVerifyFailMarker, kHopFailMarker, kQualityFailMarker})
            rules.push_back(rule(prompt, {{"chunks", marker}},
                                 "Q: " + std::string(marker) + " " + q + "\nA: " + a + "\nHOPS: {{chunk_labels}}"));
    }

    rules.push_back(rule("verify_answerable", {{"question", kVerifyFailMarker}}, "yes"));
    rules.push_back(rule("annotate_cot", {{"question", kHopFailMarker}}, "1. The answer follows from [C1] alone."));
    rules.push_back(rule("quality_answer_uniqueness", {{"question", kQualityFailMarker}}, "0"));

    rules.push_back(rule("rag_answer", {{"query", "When did"}}, "Could you clarify which period you mean?"));
    rules.push_back(rule("rag_answer", {{"query", "Which of"}}, "The site named in the newest report."));
    rules.push_back(rule("classify_response", {{"response", "clarify"}}, "clarification_request"));
    rules.push_back(rule("classify_response", {{"response", "cannot"}}, "refusal"));
    rules.push_back(rule("answer_equivalence", {{"predicted", "newest report"}}, "yes"));

    rules.push_back(rule("predict_answer_support", {{"chunk_labels", "[C2]"}},
                         "ANSWER: a rising pressure on the named sites\nSUPPORT: {{chunk_labels}}"));

    json defaults{{"ground_topic", ""},
                  {"chunk_relevance", "yes"},
                  {"verify_answerable", "no"},
                  {"annotate_cot", "1. Combine the facts stated in {{chunk_labels}}."},
                  {"quality_answer_correctness", "2"},
                  {"quality_answer_uniqueness", "2"},
                  {"quality_context_necessity", "2"},
                  {"quality_context_sufficiency", "2"},
                  {"rag_answer", "I cannot answer this from the provided context."},
                  {"classify_response", "attempted_answer"},
                  {"answer_equivalence", "no"},
                  {"hyde_passage", "A short report discussing: {{query}}"},
                  {"predict_answer_support", "ANSWER: unknown\nSUPPORT: [C1]"}};
    for (const auto& [prompt, qa] : kTemplates) {
        auto bar = qa.find('|');
        defaults[prompt] = "Q: " + qa.substr(0, bar) + "\nA: " + qa.substr(bar + 1) + "\nHOPS: {{chunk_labels}}";
    }
    return {{"rules", rules}, {"defaults", defaults}};
}

std::string toy_config_text(std::uint64_t seed) {
    return "seed = " + std::to_string(seed) + R"(

[paths]
corpus = "corpus"
out = "out"
fixtures = "feeds"

[models.mock]
kind = "mock"
fixtures = "mock_chat.json"

[acquire]
ne = 5
published_after = "2024-01-01"

[genqa]
nc = 2
max_pairs = 3

[vetting]
review_sample = 4

[providers]
backoff_ms = 1

[[rag]]
id = "vector"
generator_model = "mock"
embedding = "hash"

[[rag]]
id = "ensemble-hyde"
generator_model = "mock"
embedding = "hash"
retrieval = "ensemble"
rewriting = "hyde"
)";
}

void generate_toy_corpus(const fs::path& dir, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    fs::create_directories(dir / "corpus");

    std::vector<json> docs;
    int day = 1;
    auto date = [&] {
        char buf[16];
        std::snprintf(buf, sizeof buf, "2023-%02d-%02d", 1 + (day / 28) % 12, 1 + day % 28);
        day += 5;
        return std::string(buf);
    };
    for (const auto* list : {&kGold, &kDistractors})
        for (const auto& d : *list)
            docs.push_back({{"key", d.key}, {"title", d.title}, {"published_at", date()}, {"body", paragraph(rng, d.lead)}});
    docs.push_back({{"key", kShortCalibrationKey}, {"title", "Calibration short"},
                    {"published_at", nullptr}, {"body", filler(rng, kShortCalibrationTokens)}});
    docs.push_back({{"key", kLongCalibrationKey}, {"title", "Calibration long"},
                    {"published_at", nullptr}, {"body", filler(rng, kLongCalibrationTokens)}});
    write_file_atomic(dir / "corpus" / "documents.jsonl", jsonl(docs));

    std::vector<json> reqs;
    for (const auto& r : kRequests) reqs.push_back({{"id", r.key}, {"text", r.text}, {"gold_doc_keys", r.gold}});
    write_file_atomic(dir / "corpus" / "requests.jsonl", jsonl(reqs));

    for (const auto& f : kFeeds) {
        json items = json::array();
        for (const auto& it : f.items)
            items.push_back({{"url", it.url}, {"title", it.title}, {"published_at", it.date},
                             {"body", it.lead + " " + filler(rng, 20) + " ."}});
        json j{{"query", f.phrase}, {"status", "ok"}, {"items", items}};
        if (f.fail_times) j["fail_times"] = f.fail_times;
        auto path = acquire::FixtureSource::fixture_path(dir / "feeds", f.source, f.phrase);
        fs::create_directories(path.parent_path());
        write_file_atomic(path, j.dump(2) + "\n");
    }

    write_file_atomic(dir / "mock_rules.json", mock_rules().dump(2) + "\n");
    const auto config_text = toy_config_text(seed);
    write_file_atomic(dir / "pipeline.toml", config_text);

    // Record the exact fixture table with a throwaway run driven by the rules.
    const auto scratch = dir / ".record";
    fs::remove_all(scratch);
    auto cfg = parse_config(config_text, dir);
    cfg.models["mock"].fixtures = dir / "mock_rules.json";
    cfg.paths.out = scratch;
    cfg.paths.cache = scratch / "cache";
    {
        Pipeline p(cfg);
        p.mock_backend("mock")->set_recording(true);
        for (auto s : all_stages()) p.run_stage(s, true);
        json exact = json::object();
        for (const auto& [k, v] : p.mock_backend("mock")->recorded()) exact[k] = v;
        write_file_atomic(dir / "mock_chat.json", json{{"exact", exact}}.dump(2) + "\n");
    }
    fs::remove_all(scratch);
}

}  // namespace crumq::toy
