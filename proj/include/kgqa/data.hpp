#pragma once

// Dataset loading, seeded synthetic KGQA task generation, and evaluation.

#include <set>

#include "kgqa/model.hpp"

namespace kgqa {

struct Dataset {
  std::vector<QAExample> train, dev, test;
  size_t dropped = 0;  // examples with unresolvable answer/gold labels
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    size_t nxt = s.find(sep, pos);
    out.push_back(s.substr(pos, nxt - pos));
    if (nxt == std::string::npos) break;
    pos = nxt + 1;
  }
  return out;
}

}  // namespace detail

// QA file: `question<TAB>answer[|answer...]<TAB>gold_entities_or_-<TAB>gold_span_or_-`
// where gold span is `i:j` token indices. Unresolvable labels drop the line.
inline std::vector<QAExample> load_qa_file(const std::string& path,
                                           const ReifiedKG& kg, size_t* dropped) {
  std::ifstream f(path);
  if (!f) throw input_error("cannot open QA file: " + path);
  std::vector<QAExample> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fields = detail::split(line, '\t');
    if (fields.size() != 4)
      throw parse_error(path + " line " + std::to_string(lineno) +
                        ": expected 4 tab-separated fields");
    QAExample ex;
    ex.question = fields[0];
    bool ok = true;
    for (const auto& a : detail::split(fields[1], '|')) {
      uint32_t id = kg.entity_id(a);
      if (id == UINT32_MAX) {
        ok = false;
        break;
      }
      ex.answers.push_back(id);
    }
    if (fields[2] != "-") {
      for (const auto& g : detail::split(fields[2], '|')) {
        uint32_t id = kg.entity_id(g);
        if (id == UINT32_MAX) {
          ok = false;
          break;
        }
        ex.gold_entities.push_back(id);
      }
    }
    if (fields[3] != "-") {
      auto ij = detail::split(fields[3], ':');
      if (ij.size() != 2)
        throw parse_error(path + " line " + std::to_string(lineno) +
                          ": gold span must be i:j");
      ex.gold_span = {static_cast<uint32_t>(std::stoul(ij[0])),
                      static_cast<uint32_t>(std::stoul(ij[1]))};
    }
    if (!ok || ex.answers.empty()) {
      if (dropped) ++*dropped;
      continue;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

struct DatasetPaths {
  std::string train, dev, test;
};

inline Dataset load_dataset(const DatasetPaths& paths, const ReifiedKG& kg) {
  Dataset ds;
  if (!paths.train.empty()) ds.train = load_qa_file(paths.train, kg, &ds.dropped);
  if (!paths.dev.empty()) ds.dev = load_qa_file(paths.dev, kg, &ds.dropped);
  if (!paths.test.empty()) ds.test = load_qa_file(paths.test, kg, &ds.dropped);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic task: a people/attributes KG with 1- and 2-hop templated
// questions. Ambiguity knobs inject shared full names (candidate ambiguity
// within a span) and surname aliases on unrelated entities (nested spans).

struct SynthSpec {
  uint32_t n_people = 130;
  uint32_t n_occupations = 15;
  uint32_t n_cities = 15;
  uint32_t n_countries = 8;
  uint32_t n_instruments = 10;
  uint32_t n_domains = 6;
  uint32_t n_families = 6;
  uint32_t n_companies = 10;
  uint32_t n_train = 2000, n_dev = 200, n_test = 500;
  double shared_name_rate = 0.0;
  double overlapping_span_rate = 0.0;
  uint64_t seed = 1;

  static SynthSpec from_json(const nlohmann::json& j) {
    SynthSpec s;
    static const std::vector<std::string> known = {
        "n_people", "n_occupations", "n_cities", "n_countries", "n_instruments",
        "n_domains", "n_families", "n_companies", "n_train", "n_dev", "n_test",
        "shared_name_rate", "overlapping_span_rate", "seed"};
    for (const auto& [k, v] : j.items())
      if (std::find(known.begin(), known.end(), k) == known.end())
        throw input_error("synth spec: unknown key: " + k);
    auto get = [&](const char* k, auto& dst) {
      if (j.contains(k)) dst = j.at(k);
    };
    get("n_people", s.n_people);
    get("n_occupations", s.n_occupations);
    get("n_cities", s.n_cities);
    get("n_countries", s.n_countries);
    get("n_instruments", s.n_instruments);
    get("n_domains", s.n_domains);
    get("n_families", s.n_families);
    get("n_companies", s.n_companies);
    get("n_train", s.n_train);
    get("n_dev", s.n_dev);
    get("n_test", s.n_test);
    get("shared_name_rate", s.shared_name_rate);
    get("overlapping_span_rate", s.overlapping_span_rate);
    get("seed", s.seed);
    return s;
  }
};

struct SynthTask {
  std::vector<Triple> triples;
  std::vector<std::pair<std::string, std::string>> aliases;  // (label, alias)
  // raw QA lines per split: question, answers, gold entity labels, gold span
  struct QaLine {
    std::string question;
    std::vector<std::string> answers;
    std::string gold_entity;
    uint32_t span_i = 0, span_j = 0;
  };
  std::vector<QaLine> train, dev, test;
};

namespace synth_detail {

inline std::vector<std::string> pool(const std::vector<std::string>& base,
                                     const std::string& prefix, uint32_t n) {
  std::vector<std::string> out;
  for (uint32_t i = 0; i < n; ++i)
    out.push_back(i < base.size() ? base[i] : prefix + std::to_string(i));
  return out;
}

inline const std::vector<std::string>& first_names() {
  static const std::vector<std::string> v = {
      "alice", "brian",  "carla", "david",  "erika", "felix", "grace", "henry",
      "irene", "jacob",  "karen", "liam",   "maria", "noah",  "olga",  "peter",
      "quinn", "rosa",   "simon", "tanya",  "ulrich", "vera", "walter", "xenia",
      "yuri",  "zoe",    "amber", "boris",  "clara", "dmitri", "elena", "frank",
      "gina",  "hans",   "ivan",  "julia",  "kevin", "laura", "marco", "nina"};
  return v;
}

inline const std::vector<std::string>& last_names() {
  static const std::vector<std::string> v = {
      "abbott",   "becker",  "castillo", "dawson",   "ellison",  "ferrara",
      "gibson",   "holloway", "ibarra",  "jensen",   "keller",   "lambert",
      "moreau",   "novak",   "ortega",   "petrov",   "quimby",   "ramirez",
      "sandoval", "tanaka",  "ullman",   "vasquez",  "whitaker", "xu",
      "yamada",   "zielinski", "archer", "barnes",   "carver",   "duran",
      "engel",    "fontaine", "garner",  "hubbard",  "ingram",   "jarvis",
      "kowalski", "larsen",  "mercer",   "nielsen"};
  return v;
}

inline std::string roman(uint32_t n) {
  static const char* small[] = {"", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix"};
  return n < 9 ? small[n] : "x" + std::to_string(n);
}

}  // namespace synth_detail

inline SynthTask generate_synth(const SynthSpec& spec) {
  using namespace synth_detail;
  Rng rng(spec.seed);
  SynthTask task;

  auto occs = pool({"pilot", "teacher", "chef", "nurse", "farmer", "singer",
                    "actor", "lawyer", "doctor", "painter", "dancer", "writer",
                    "sailor", "barber", "tailor"},
                   "occkind", spec.n_occupations);
  auto cities = pool({"aldershot", "brixton", "calder", "dunmore", "eastwick",
                      "fenwick", "gorton", "harlow", "ilford", "jarrow",
                      "kendal", "ludlow", "marlow", "norwood", "oakham"},
                     "cityname", spec.n_cities);
  auto countries = pool({"atlantis", "borduria", "carpathia", "dalmatia",
                         "elbonia", "freedonia", "sylvania", "ruritania"},
                        "landname", spec.n_countries);
  auto instruments = pool({"violin", "piano", "flute", "drums", "guitar",
                           "cello", "trumpet", "harp", "oboe", "banjo"},
                          "instrname", spec.n_instruments);
  auto domains = pool({"aviation", "education", "cuisine", "medicine",
                       "agriculture", "arts"},
                      "domainname", spec.n_domains);
  auto families = pool({"strings", "keyboard", "woodwind", "percussion",
                        "brass", "plucked"},
                       "famname", spec.n_families);
  auto companies = pool({"acme corp", "globex inc", "initech ltd", "umbrella co",
                         "stark industries", "wayne enterprises", "tyrell corp",
                         "cyberdyne systems", "soylent corp", "wonka factory"},
                        "firmname", spec.n_companies);

  // people: unique labels; shared names become "<name> ii" etc. with the
  // base name attached as an alias
  std::vector<std::string> person_labels;     // unique entity labels
  std::vector<std::string> person_names;      // surface name used in questions
  std::vector<std::string> person_surnames;
  std::unordered_map<std::string, uint32_t> name_count;
  std::unordered_set<std::string> used_names;
  for (uint32_t p = 0; p < spec.n_people; ++p) {
    std::string name;
    if (!person_names.empty() && rng.next_double() < spec.shared_name_rate) {
      name = person_names[rng.next_below(person_names.size())];
    } else {
      size_t attempts = 0;
      do {
        if (++attempts > 100000)
          throw capacity_error("synth spec: name pool exhausted, reduce n_people");
        name = first_names()[rng.next_below(first_names().size())] + " " +
               last_names()[rng.next_below(last_names().size())];
      } while (used_names.count(name));
    }
    used_names.insert(name);
    uint32_t n = name_count[name]++;
    std::string label = n == 0 ? name : name + " " + roman(n);
    person_labels.push_back(label);
    person_names.push_back(name);
    person_surnames.push_back(name.substr(name.rfind(' ') + 1));
    if (n > 0) task.aliases.emplace_back(label, name);
  }

  // per-person attribute assignments
  std::vector<uint32_t> p_occ(spec.n_people), p_city(spec.n_people),
      p_instr(spec.n_people), p_country(spec.n_people), p_company(spec.n_people);
  for (uint32_t p = 0; p < spec.n_people; ++p) {
    p_occ[p] = static_cast<uint32_t>(rng.next_below(occs.size()));
    p_city[p] = static_cast<uint32_t>(rng.next_below(cities.size()));
    p_instr[p] = static_cast<uint32_t>(rng.next_below(instruments.size()));
    p_country[p] = static_cast<uint32_t>(rng.next_below(countries.size()));
    p_company[p] = static_cast<uint32_t>(rng.next_below(companies.size()));
  }
  std::vector<uint32_t> occ_domain(occs.size()), city_country(cities.size()),
      instr_family(instruments.size());
  for (auto& v : occ_domain) v = static_cast<uint32_t>(rng.next_below(domains.size()));
  for (auto& v : city_country) v = static_cast<uint32_t>(rng.next_below(countries.size()));
  for (auto& v : instr_family) v = static_cast<uint32_t>(rng.next_below(families.size()));

  for (uint32_t p = 0; p < spec.n_people; ++p) {
    task.triples.push_back({person_labels[p], "has occupation", occs[p_occ[p]]});
    task.triples.push_back({person_labels[p], "born in", cities[p_city[p]]});
    task.triples.push_back({person_labels[p], "plays instrument", instruments[p_instr[p]]});
    task.triples.push_back({person_labels[p], "citizen of", countries[p_country[p]]});
    task.triples.push_back({person_labels[p], "works for", companies[p_company[p]]});
  }
  for (uint32_t o = 0; o < occs.size(); ++o)
    task.triples.push_back({occs[o], "in field", domains[occ_domain[o]]});
  for (uint32_t c = 0; c < cities.size(); ++c)
    task.triples.push_back({cities[c], "located in", countries[city_country[c]]});
  for (uint32_t i = 0; i < instruments.size(); ++i)
    task.triples.push_back({instruments[i], "in family", families[instr_family[i]]});

  // nested-span ambiguity: a person's surname doubles as an alias of some
  // unrelated entity, so questions match both "first last" and "last"
  for (uint32_t p = 0; p < spec.n_people; ++p) {
    if (rng.next_double() < spec.overlapping_span_rate) {
      const std::string& target = companies[rng.next_below(companies.size())];
      task.aliases.emplace_back(target, person_surnames[p]);
    }
  }

  // question templates: {0} = person name
  struct Template {
    const char* text;
    const char* rel1;
    const char* rel2;  // nullptr for 1-hop
  };
  static const Template templates[] = {
      {"what is the occupation of {}", "has occupation", nullptr},
      {"which occupation does {} have", "has occupation", nullptr},
      {"what does {} do for a living", "has occupation", nullptr},
      {"where was {} born", "born in", nullptr},
      {"what is the birthplace of {}", "born in", nullptr},
      {"which city was {} born in", "born in", nullptr},
      {"what instrument does {} play", "plays instrument", nullptr},
      {"which instrument is played by {}", "plays instrument", nullptr},
      {"name the instrument that {} plays", "plays instrument", nullptr},
      {"what country is {} a citizen of", "citizen of", nullptr},
      {"which country does {} come from", "citizen of", nullptr},
      {"what is the citizenship of {}", "citizen of", nullptr},
      {"what company does {} work for", "works for", nullptr},
      {"who employs {}", "works for", nullptr},
      {"which firm does {} work at", "works for", nullptr},
      {"what is the field of the occupation of {}", "has occupation", "in field"},
      {"which field does the job of {} belong to", "has occupation", "in field"},
      {"what field does {} work in", "has occupation", "in field"},
      {"in what country was {} born", "born in", "located in"},
      {"which country contains the birthplace of {}", "born in", "located in"},
      {"what country holds the city where {} was born", "born in", "located in"},
      {"what family of instruments does {} play", "plays instrument", "in family"},
      {"which instrument family suits {}", "plays instrument", "in family"},
      {"what is the family of the instrument of {}", "plays instrument", "in family"},
  };

  // brute-force traversal over the generated triple list
  auto follow_labels = [&](const std::string& src, const std::string& rel) {
    std::vector<std::string> out;
    for (const auto& t : task.triples)
      if (t.subject == src && t.predicate == rel) out.push_back(t.object);
    return out;
  };

  std::vector<SynthTask::QaLine> all;
  std::unordered_set<std::string> seen_questions;
  for (uint32_t p = 0; p < spec.n_people; ++p) {
    for (const auto& tpl : templates) {
      std::string text(tpl.text);
      text.replace(text.find("{}"), 2, person_names[p]);
      if (seen_questions.count(text)) continue;  // shared names collide here
      seen_questions.insert(text);
      SynthTask::QaLine line;
      line.question = text;
      line.gold_entity = person_labels[p];
      std::vector<std::string> mid = follow_labels(person_labels[p], tpl.rel1);
      if (tpl.rel2 == nullptr) {
        line.answers = mid;
      } else {
        for (const auto& m : mid)
          for (const auto& a : follow_labels(m, tpl.rel2)) line.answers.push_back(a);
      }
      // gold span: locate the name's token subsequence
      TokenSeq qt = tokenize(text);
      TokenSeq nt = tokenize(person_names[p]);
      for (uint32_t i = 0; i + nt.size() <= qt.size(); ++i) {
        bool match = true;
        for (uint32_t k = 0; k < nt.size(); ++k)
          if (qt.tokens[i + k] != nt.tokens[k]) {
            match = false;
            break;
          }
        if (match) {
          line.span_i = i;
          line.span_j = i + static_cast<uint32_t>(nt.size()) - 1;
          break;
        }
      }
      all.push_back(std::move(line));
    }
  }
  if (all.size() < size_t(spec.n_train) + spec.n_dev + spec.n_test)
    throw input_error("synth spec: not enough distinct questions (" +
                      std::to_string(all.size()) + ") for requested split sizes");
  rng.shuffle(all);
  task.train.assign(all.begin(), all.begin() + spec.n_train);
  task.dev.assign(all.begin() + spec.n_train, all.begin() + spec.n_train + spec.n_dev);
  task.test.assign(all.begin() + spec.n_train + spec.n_dev,
                   all.begin() + spec.n_train + spec.n_dev + spec.n_test);
  return task;
}

inline void write_synth_files(const SynthTask& task, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "triples.tsv", std::ios::binary);
    for (const auto& t : task.triples)
      f << t.subject << '\t' << t.predicate << '\t' << t.object << '\n';
  }
  {
    std::ofstream f(dir / "aliases.tsv", std::ios::binary);
    for (const auto& [label, alias] : task.aliases)
      f << label << '\t' << alias << '\n';
  }
  auto write_split = [&](const char* name, const std::vector<SynthTask::QaLine>& lines) {
    std::ofstream f(dir / name, std::ios::binary);
    for (const auto& l : lines) {
      f << l.question << '\t';
      for (size_t i = 0; i < l.answers.size(); ++i)
        f << (i ? "|" : "") << l.answers[i];
      f << '\t' << l.gold_entity << '\t' << l.span_i << ':' << l.span_j << '\n';
    }
  };
  write_split("train.tsv", task.train);
  write_split("dev.tsv", task.dev);
  write_split("test.tsv", task.test);
}

// Token vocabulary from a set of examples (sorted, deduped).
inline std::vector<std::string> build_token_vocab(const std::vector<QAExample>& exs) {
  std::set<std::string> toks;
  for (const auto& ex : exs)
    for (const auto& t : tokenize(ex.question).tokens) toks.insert(t);
  return {toks.begin(), toks.end()};
}

struct EvalMetrics {
  double hits_at_1 = 0.0;
  double accuracy = 0.0;  // same top-1 rule under this answer protocol
  double coverage = 0.0;
  size_t n = 0, skipped = 0;
};

// Top-1 rule, ties to lower entity id; skipped examples count as wrong.
inline EvalMetrics evaluate(const PipelineContext& ctx, const ModelParams& params,
                            const std::vector<QAExample>& split, Variant variant) {
  if (split.empty()) throw input_error("evaluate: empty split");
  EvalMetrics m;
  m.n = split.size();
  size_t hits = 0;
  for (const auto& ex : split) {
    ForwardResult fr = forward_example(ctx, params, ex, variant, false);
    if (fr.skipped) {
      ++m.skipped;
      continue;
    }
    uint32_t top = top1_entity(fr.trace.y_hat);
    if (top != UINT32_MAX &&
        std::find(ex.answers.begin(), ex.answers.end(), top) != ex.answers.end())
      ++hits;
  }
  m.hits_at_1 = double(hits) / double(m.n);
  m.accuracy = m.hits_at_1;
  m.coverage = double(m.n - m.skipped) / double(m.n);
  return m;
}

}  // namespace kgqa
