#pragma once

#include "nasbot/arch_json.hpp"
#include "nasbot/architecture.hpp"
#include "nasbot/errors.hpp"
#include "nasbot/evo.hpp"
#include "nasbot/external.hpp"
#include "nasbot/format.hpp"
#include "nasbot/gp.hpp"
#include "nasbot/hash.hpp"
#include "nasbot/labels.hpp"
#include "nasbot/mcmc.hpp"
#include "nasbot/objectives.hpp"
#include "nasbot/otmann.hpp"
#include "nasbot/pool.hpp"
#include "nasbot/search.hpp"
#include "nasbot/transport.hpp"
