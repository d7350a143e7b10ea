#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pba/error.hpp"

namespace pba {

// Built-in lexicons used by the corpus generator and the rule-based tagger.
// Names and cities are disjoint from each other and from every word the
// biography templates use.
namespace lexicon {

inline const std::vector<std::string>& male_names() {
  static const std::vector<std::string> k = {
      "James",   "John",     "Robert",   "Michael",  "David",     "William", "Richard", "Joseph",
      "Thomas",  "Charles",  "Daniel",   "Matthew",  "Anthony",   "Mark",    "Steven",  "Paul",
      "Andrew",  "Joshua",   "Kevin",    "Brian",    "George",    "Edward",  "Ronald",  "Timothy",
      "Jason",   "Jeffrey",  "Ryan",     "Jacob",    "Gary",      "Nicholas", "Eric",   "Jonathan",
      "Stephen", "Larry",    "Justin",   "Scott",    "Brandon",   "Benjamin", "Samuel", "Gregory",
      "Alexander", "Patrick", "Frank",   "Raymond",  "Jack",      "Dennis",  "Jerry",   "Tyler",
      "Aaron",   "Henry",    "Javier",   "Carlos",   "Miguel",    "Pablo",   "Diego",   "Luis",
      "Marco",   "Hugo",     "Lucas",    "Mateo"};
  return k;
}

inline const std::vector<std::string>& female_names() {
  static const std::vector<std::string> k = {
      "Mary",     "Patricia", "Jennifer", "Linda",     "Elizabeth", "Barbara",  "Susan",    "Jessica",
      "Sarah",    "Karen",    "Nancy",    "Lisa",      "Betty",     "Margaret", "Sandra",   "Ashley",
      "Kimberly", "Emily",    "Donna",    "Michelle",  "Dorothy",   "Carol",    "Amanda",   "Melissa",
      "Deborah",  "Stephanie", "Rebecca", "Laura",     "Sharon",    "Cynthia",  "Kathleen", "Amy",
      "Shirley",  "Angela",   "Helen",    "Anna",      "Brenda",    "Pamela",   "Nicole",   "Samantha",
      "Katherine", "Emma",    "Ruth",     "Christine", "Catherine", "Debra",    "Rachel",   "Carolyn",
      "Janet",    "Maria",    "Lucia",    "Carmen",    "Elena",     "Sofia",    "Paula",    "Marta",
      "Julia",    "Irene",    "Alba",     "Claudia"};
  return k;
}

inline const std::vector<std::string>& cities() {
  static const std::vector<std::string> k = {
      "Madrid",    "Lisbon",   "Porto",     "Seville",   "Valencia",  "Bilbao",   "Paris",   "Lyon",
      "Marseille", "Berlin",   "Munich",    "Hamburg",   "Prague",    "Warsaw",   "Krakow",  "Dublin",
      "Cork",      "Oslo",     "Bergen",    "Stockholm", "Helsinki",  "Copenhagen", "Amsterdam", "Rotterdam",
      "Brussels",  "Antwerp",  "Zurich",    "Geneva",    "Milan",     "Turin",    "Naples",  "Rome",
      "Athens",    "Toronto",  "Montreal",  "Vancouver", "Chicago",   "Boston",   "Seattle", "Denver",
      "Dallas",    "Houston",  "Phoenix",   "Atlanta",   "Miami",     "Detroit",  "Melbourne", "Brisbane",
      "Perth",     "Auckland", "Wellington", "Tokyo",    "Osaka",     "Seoul",    "Singapore", "Mumbai",
      "Nairobi",   "Lagos",    "Cairo",     "Lima"};
  return k;
}

}  // namespace lexicon

// Number of entries kept for the tagger out of a list of `size` when a
// fraction is held out. The held-out entries are the tail of the list.
inline std::size_t visible_count(std::size_t size, double heldout_fraction) {
  const auto held = static_cast<std::size_t>(std::llround(static_cast<double>(size) * heldout_fraction));
  return size - std::min(held, size);
}

// Exact-match surface forms, case-sensitive.
struct Gazetteer {
  std::set<std::string> persons;
  std::set<std::string> locations;

  // Every built-in name and city.
  static Gazetteer full() { return with_heldout(0.0); }

  // Built-in lexicon minus the held-out tail of each gendered name list.
  static Gazetteer with_heldout(double heldout_fraction) {
    Gazetteer g;
    for (const auto* names : {&lexicon::male_names(), &lexicon::female_names()}) {
      const std::size_t keep = visible_count(names->size(), heldout_fraction);
      g.persons.insert(names->begin(), names->begin() + static_cast<std::ptrdiff_t>(keep));
    }
    g.locations.insert(lexicon::cities().begin(), lexicon::cities().end());
    return g;
  }
};

// One entry per line, UTF-8; blank lines are skipped.
inline std::set<std::string> load_gazetteer_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open gazetteer: " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

}  // namespace pba
