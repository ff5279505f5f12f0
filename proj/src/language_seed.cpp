#include "language_seed.hpp"

namespace t2t::seed {

const std::string_view kEnglish =
    "The old library stood at the corner of the street, and every morning the children walked past it on their "
    "way to school. Nobody could remember when it had been built, but everyone agreed that it was the most "
    "beautiful building in the town. In the summer the windows were open and you could hear the sound of pages "
    "turning. The librarian was a quiet woman who knew the name of every book on the shelves. She would often "
    "recommend a story that you had never heard of, and it would turn out to be exactly what you wanted. "
    "Last year the city council decided that the building needed repairs. The roof was leaking, the heating "
    "system was failing, and the stairs were no longer safe. There was a long debate about whether the money "
    "should be spent on the library or on a new road. In the end the people of the town raised the funds "
    "themselves. They held bake sales, concerts and auctions, and after six months they had enough to pay for "
    "the work. When the library reopened, there was a celebration with music and food in the square. "
    "Scientists have found that regular exercise improves memory and helps people sleep better at night. "
    "The study followed more than two thousand adults for a period of ten years. Those who walked for at least "
    "thirty minutes a day were less likely to develop heart disease. The researchers also noted that the "
    "benefits appeared even among people who started exercising later in life. However, they warned that "
    "more work is needed before firm conclusions can be drawn. The company announced on Tuesday that it would "
    "open a new office in the capital, creating hundreds of jobs over the next three years. Shares rose "
    "sharply after the news was released. Analysts said the decision reflected strong demand for its "
    "products in the region. The weather this weekend will be mostly sunny with a chance of showers in the "
    "afternoon. Temperatures should reach the high twenties, so remember to drink plenty of water. "
    "If you have any questions about your order, please contact our customer service team by email or "
    "telephone. We will do our best to respond within one business day. Thank you for your patience and "
    "for choosing our store. What is the best way to learn a new language? Many teachers say that you should "
    "practice a little every day, listen to native speakers, and not be afraid of making mistakes. Reading "
    "books and watching films can also help you understand how the language is really used. "
    "He said that they would meet again when the project was finished, but they never did. "
    "This recipe is simple and quick. Mix the flour with the butter, add the sugar and eggs, and bake for "
    "twenty minutes until golden brown. Serve warm with fresh fruit or a scoop of ice cream.";

const std::string_view kFrench =
    "La vieille bibliotheque se trouvait au coin de la rue, et chaque matin les enfants passaient devant elle "
    "en allant a l'ecole. Personne ne se souvenait de la date de sa construction, mais tout le monde etait "
    "d'accord pour dire que c'etait le plus beau batiment de la ville. En ete les fenetres etaient ouvertes et "
    "on pouvait entendre le bruit des pages que l'on tourne. La bibliothecaire etait une femme calme qui "
    "connaissait le nom de chaque livre sur les etageres. L'annee derniere, le conseil municipal a decide que "
    "le batiment avait besoin de reparations. Le toit fuyait, le chauffage ne fonctionnait plus et les "
    "escaliers n'etaient plus surs. Les scientifiques ont decouvert que l'exercice regulier ameliore la "
    "memoire et aide les gens a mieux dormir la nuit. L'entreprise a annonce mardi qu'elle allait ouvrir un "
    "nouveau bureau dans la capitale, ce qui creera des centaines d'emplois au cours des trois prochaines "
    "annees. Le temps de ce week-end sera plutot ensoleille avec un risque d'averses dans l'apres-midi. "
    "Si vous avez des questions sur votre commande, veuillez contacter notre service client par courriel ou "
    "par telephone. Nous ferons de notre mieux pour vous repondre dans les plus brefs delais. Quelle est la "
    "meilleure facon d'apprendre une nouvelle langue? Beaucoup de professeurs disent qu'il faut pratiquer un "
    "peu tous les jours et ne pas avoir peur de faire des erreurs. Melangez la farine avec le beurre, ajoutez "
    "le sucre et les oeufs, puis faites cuire pendant vingt minutes.";

const std::string_view kGerman =
    "Die alte Bibliothek stand an der Ecke der Strasse, und jeden Morgen gingen die Kinder auf dem Weg zur "
    "Schule an ihr vorbei. Niemand konnte sich erinnern, wann sie gebaut worden war, aber alle waren sich "
    "einig, dass es das schoenste Gebaeude der Stadt war. Im Sommer waren die Fenster geoeffnet, und man "
    "konnte das Umblaettern der Seiten hoeren. Die Bibliothekarin war eine ruhige Frau, die den Namen jedes "
    "Buches in den Regalen kannte. Letztes Jahr beschloss der Stadtrat, dass das Gebaeude repariert werden "
    "musste. Das Dach war undicht, die Heizung fiel aus und die Treppen waren nicht mehr sicher. "
    "Wissenschaftler haben herausgefunden, dass regelmaessige Bewegung das Gedaechtnis verbessert und den "
    "Menschen hilft, nachts besser zu schlafen. Das Unternehmen kuendigte am Dienstag an, ein neues Buero in "
    "der Hauptstadt zu eroeffnen und in den naechsten drei Jahren Hunderte von Arbeitsplaetzen zu schaffen. "
    "Das Wetter am Wochenende wird ueberwiegend sonnig mit der Moeglichkeit von Schauern am Nachmittag. "
    "Wenn Sie Fragen zu Ihrer Bestellung haben, wenden Sie sich bitte per E-Mail oder Telefon an unseren "
    "Kundendienst. Was ist der beste Weg, eine neue Sprache zu lernen? Viele Lehrer sagen, dass man jeden Tag "
    "ein wenig ueben und keine Angst vor Fehlern haben sollte. Mischen Sie das Mehl mit der Butter, geben Sie "
    "Zucker und Eier dazu und backen Sie alles zwanzig Minuten lang.";

const std::string_view kSpanish =
    "La vieja biblioteca estaba en la esquina de la calle, y cada manana los ninos pasaban por delante de "
    "ella camino de la escuela. Nadie recordaba cuando se habia construido, pero todos estaban de acuerdo en "
    "que era el edificio mas bonito del pueblo. En verano las ventanas estaban abiertas y se podia oir el "
    "sonido de las paginas al pasar. La bibliotecaria era una mujer tranquila que conocia el nombre de cada "
    "libro de las estanterias. El ano pasado el ayuntamiento decidio que el edificio necesitaba reparaciones. "
    "El tejado tenia goteras, la calefaccion fallaba y las escaleras ya no eran seguras. Los cientificos han "
    "descubierto que el ejercicio regular mejora la memoria y ayuda a las personas a dormir mejor por la "
    "noche. La empresa anuncio el martes que abriria una nueva oficina en la capital, lo que creara cientos de "
    "empleos en los proximos tres anos. El tiempo este fin de semana sera mayormente soleado con posibilidad "
    "de chubascos por la tarde. Si tiene alguna pregunta sobre su pedido, pongase en contacto con nuestro "
    "servicio de atencion al cliente por correo electronico o por telefono. Cual es la mejor manera de "
    "aprender un idioma nuevo? Muchos profesores dicen que hay que practicar un poco todos los dias y no tener "
    "miedo de cometer errores. Mezcle la harina con la mantequilla, anada el azucar y los huevos y hornee "
    "durante veinte minutos.";

}  // namespace t2t::seed
